"""Tuner: budget ladders, halving, density proposals, the metric audit."""

import math

import numpy as np
import pytest

from tabnas.benchtab import best_in_space, generate_surrogate_table
from tabnas.tuner import (
    Categorical,
    ConfigSpace,
    Continuous,
    Integer,
    ObjectiveValue,
    TunerConfig,
    budget_ladder,
    config_space_preset,
    kde_propose,
    ladder_populations,
    run_tuner,
    successive_halving,
)

LINE = ConfigSpace((Continuous("x", 0.0, 1.0),))


@pytest.fixture(scope="module")
def table1(space1):
    return generate_surrogate_table(space1, 7)


def identity(config, budget):
    return config["x"]


class TestLadder:
    def test_rungs(self):
        assert budget_ladder(25, 100, 2) == [25, 50, 100]
        assert budget_ladder(100, 100, 2) == [100]
        assert budget_ladder(10, 90, 3) == [10, 30, 90]

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            budget_ladder(0, 100, 2)
        with pytest.raises(ValueError):
            budget_ladder(200, 100, 2)
        with pytest.raises(ValueError):
            budget_ladder(25, 100, 1)

    def test_populations(self):
        assert ladder_populations(8, 2, 3) == [8, 4, 2]
        assert ladder_populations(1, 2, 3) == [1, 1, 1]
        assert ladder_populations(5, 3, 2) == [5, 2]
        with pytest.raises(ValueError):
            ladder_populations(0, 2, 3)


class TestTunerConfig:
    def test_defaults(self):
        config = TunerConfig()
        assert config.min_budget == 25
        assert config.max_budget == 100
        assert config.eta == 2
        assert config.eval_budget == 280.0
        assert config.sampler == "random"
        assert config.bracket_rotation is False
        assert config.workers == 1
        assert config.seed == 0

    @pytest.mark.parametrize(
        "overrides",
        [
            {"min_budget": 0},
            {"min_budget": 100},
            {"min_budget": 120},
            {"eta": 1},
            {"eval_budget": 0.0},
            {"eval_budget": -5.0},
            {"sampler": "grid"},
            {"workers": 0},
        ],
    )
    def test_rejects(self, overrides):
        with pytest.raises(ValueError):
            TunerConfig(**overrides)


class TestConfigSpace:
    def test_presets_nest(self):
        assert config_space_preset(1).names() == ("logit_l2", "noise_prob")
        assert config_space_preset(2).names() == (
            "logit_l2",
            "noise_prob",
            "arch_lr",
        )
        level3 = config_space_preset(3)
        assert len(level3) == 9
        assert level3.names()[:3] == config_space_preset(2).names()
        assert set(level3.names()[3:]) == {
            "baseline_decay",
            "samples_per_step",
            "tau_start",
            "tau_end",
            "fidelity_budget",
            "selection_noise",
        }

    def test_preset_rejects_unknown_level(self):
        for level in (0, 4):
            with pytest.raises(ValueError):
                config_space_preset(level)

    def test_dimension_invariants(self):
        with pytest.raises(ValueError):
            Continuous("x", 1.0, 1.0)
        with pytest.raises(ValueError):
            Continuous("x", 2.0, 1.0)
        with pytest.raises(ValueError):
            Continuous("x", 0.0, 1.0, log=True)
        with pytest.raises(ValueError):
            Integer("k", 3, 3)
        with pytest.raises(ValueError):
            Categorical("c", (1,))
        with pytest.raises(ValueError):
            Categorical("c", (1, 1, 2))
        with pytest.raises(ValueError):
            ConfigSpace(())
        with pytest.raises(ValueError):
            ConfigSpace((Continuous("x", 0, 1), Integer("x", 0, 2)))

    def test_samples_stay_in_box(self):
        space = config_space_preset(3)
        rng = np.random.default_rng(0)
        for _ in range(200):
            config = space.sample(rng)
            assert 1e-5 <= config["logit_l2"] <= 1.0
            assert 0.0 <= config["noise_prob"] <= 1.0
            assert 1e-3 <= config["arch_lr"] <= 1.0
            assert 0.0 <= config["baseline_decay"] <= 0.99
            assert isinstance(config["samples_per_step"], int)
            assert 2 <= config["samples_per_step"] <= 16
            assert 1.0 <= config["tau_start"] <= 5.0
            assert 0.01 <= config["tau_end"] <= 1.0
            assert config["fidelity_budget"] in (4, 12, 36)
            assert 0.0 <= config["selection_noise"] <= 0.05

    def test_unit_transforms_roundtrip(self):
        linear = Continuous("a", -2.0, 6.0)
        logdim = Continuous("b", 1e-4, 1.0, log=True)
        integer = Integer("k", 2, 16)
        for z in np.linspace(0.0, 1.0, 17):
            assert linear.to_unit(linear.from_unit(z)) == pytest.approx(z)
            assert logdim.to_unit(logdim.from_unit(z)) == pytest.approx(z)
        for k in range(2, 17):
            assert integer.from_unit(integer.to_unit(k)) == k
        # out-of-box unit coordinates clip to the bounds
        assert linear.from_unit(-0.5) == -2.0
        assert linear.from_unit(1.5) == 6.0
        assert logdim.from_unit(-1.0) == pytest.approx(1e-4)
        assert integer.from_unit(2.0) == 16


class TestSuccessiveHalving:
    @pytest.mark.parametrize("n", range(1, 17))
    def test_single_ladder_promotes_rung_best(self, n):
        config = TunerConfig(eval_budget=1e-9)  # only the first ladder fits
        trace = successive_halving(
            identity, LINE, config, np.random.default_rng(n), n=n
        )
        rungs = budget_ladder(25, 100, 2)
        populations = ladder_populations(n, 2, len(rungs))
        by_rung = [
            [e for e in trace.evaluations if e.budget == budget] for budget in rungs
        ]
        assert [len(group) for group in by_rung] == populations
        for group in by_rung:
            indices = [e.sample_index for e in group]
            assert indices == sorted(indices)
        for current, following, keep in zip(by_rung, by_rung[1:], populations[1:]):
            ranked = sorted(current, key=lambda e: (e.score, e.sample_index))
            survivors = {e.sample_index for e in ranked[:keep]}
            assert {e.sample_index for e in following} == survivors

    def test_default_count_is_eta_to_the_rungs(self):
        config = TunerConfig(eval_budget=6.0)
        trace = successive_halving(identity, LINE, config, np.random.default_rng(0))
        assert [e.budget for e in trace.evaluations] == (
            [25] * 8 + [50] * 4 + [100] * 2
        )
        assert {e.sample_index for e in trace.evaluations} == set(range(8))

    def test_ladders_repeat_within_eval_budget(self):
        # one ladder costs 8/4 + 4/2 + 2 = 6 full-budget equivalents
        trace = successive_halving(
            identity, LINE, TunerConfig(eval_budget=12.0), np.random.default_rng(0)
        )
        assert len(trace.evaluations) == 28
        assert {e.sample_index for e in trace.evaluations} == set(range(16))
        shy = successive_halving(
            identity, LINE, TunerConfig(eval_budget=13.0), np.random.default_rng(0)
        )
        assert len(shy.evaluations) == 28  # a third ladder would overspend

    def test_plain_float_scores_charge_the_budget(self):
        trace = successive_halving(
            identity, LINE, TunerConfig(eval_budget=6.0), np.random.default_rng(1)
        )
        for evaluation in trace.evaluations:
            assert evaluation.cost == evaluation.budget
        costs = np.cumsum([e.cost for e in trace.evaluations])
        assert costs.tolist() == [e.cumulative_cost for e in trace.evaluations]

    def test_objective_value_costs_are_kept(self):
        def timed(config, budget):
            return ObjectiveValue(score=config["x"], cost=3.5)

        trace = successive_halving(
            timed, LINE, TunerConfig(eval_budget=12.0), np.random.default_rng(1)
        )
        assert len(trace.evaluations) == 28  # budget accounting ignores cost
        assert all(e.cost == 3.5 for e in trace.evaluations)

    def test_incumbents_are_strict_improvements(self):
        trace = successive_halving(
            identity, LINE, TunerConfig(eval_budget=24.0), np.random.default_rng(2)
        )
        scores = [i.score for i in trace.incumbents]
        assert all(b < a for a, b in zip(scores, scores[1:]))
        assert trace.incumbents[0].score == trace.evaluations[0].score
        best = math.inf
        expected = []
        for evaluation in trace.evaluations:
            if evaluation.score < best:
                best = evaluation.score
                expected.append((evaluation.cumulative_cost, evaluation.score))
        assert [(i.cumulative_cost, i.score) for i in trace.incumbents] == expected

    def test_cumulative_cost_strictly_increases(self):
        trace = successive_halving(
            identity, LINE, TunerConfig(eval_budget=18.0), np.random.default_rng(3)
        )
        costs = [e.cumulative_cost for e in trace.evaluations]
        assert all(b > a for a, b in zip(costs, costs[1:]))

    def test_objective_failure_names_the_sample(self):
        calls = 0

        def flaky(config, budget):
            nonlocal calls
            calls += 1
            if calls == 4:
                raise ValueError("nope")
            return config["x"]

        with pytest.raises(
            RuntimeError, match=r"objective failed for sample 3 at budget 25"
        ) as excinfo:
            successive_halving(
                flaky, LINE, TunerConfig(eval_budget=6.0), np.random.default_rng(0)
            )
        assert isinstance(excinfo.value.__cause__, ValueError)

    def test_workers_do_not_change_the_trace(self):
        serial = successive_halving(
            identity, LINE, TunerConfig(eval_budget=12.0), np.random.default_rng(5)
        )
        threaded = successive_halving(
            identity,
            LINE,
            TunerConfig(eval_budget=12.0, workers=3),
            np.random.default_rng(5),
        )
        assert serial == threaded

    def test_bracket_rotation_shifts_the_ladder(self):
        trace = successive_halving(
            identity,
            LINE,
            TunerConfig(eval_budget=18.0, bracket_rotation=True),
            np.random.default_rng(4),
        )
        full = [25] * 8 + [50] * 4 + [100] * 2
        assert [e.budget for e in trace.evaluations] == (
            full + [50] * 4 + [100] * 2 + [100] * 2 + full
        )

    def test_propose_callable_sees_the_history(self):
        lengths = []

        def pin(history, rng):
            lengths.append(len(history))
            return {"x": 0.5}

        trace = successive_halving(
            identity,
            LINE,
            TunerConfig(eval_budget=12.0),
            np.random.default_rng(0),
            propose=pin,
        )
        assert lengths == [0] * 8 + [14] * 8
        assert all(e.config == {"x": 0.5} for e in trace.evaluations)

    def test_incumbent_beats_eight_fresh_draws(self):
        # the default evaluation budget must leave random tuning ahead of a
        # naive 8-sample baseline in nearly every seed
        wins = 0
        for seed in range(200):
            trace = successive_halving(
                identity, LINE, TunerConfig(), np.random.default_rng(seed)
            )
            fresh = np.random.default_rng(10_000 + seed).random(8)
            wins += trace.incumbents[-1].score <= fresh.min()
        assert wins >= 190


class TestKdeProposer:
    def test_short_history_is_exactly_the_random_sampler(self):
        history = [({"x": 0.3}, 0.5), ({"x": 0.7}, 0.4)]
        a, b = np.random.default_rng(0), np.random.default_rng(0)
        proposals = [kde_propose(history, LINE, a)["x"] for _ in range(200)]
        reference = [LINE.sample(b)["x"] for _ in range(200)]
        assert proposals == reference

    def test_degenerate_history_concentrates(self):
        history = [({"x": 0.3}, 0.5)] * 30
        rng = np.random.default_rng(1)
        distances = [
            abs(kde_propose(history, LINE, rng)["x"] - 0.3) for _ in range(1000)
        ]
        # uniform proposals sit at mean distance 0.29 from the point
        assert np.mean(distances) < 0.29 / 2

    def test_proposals_stay_in_box(self):
        space = ConfigSpace(
            (
                Continuous("lr", 1e-4, 1.0, log=True),
                Integer("k", 2, 16),
                Categorical("b", (4, 12, 36)),
            )
        )
        rng = np.random.default_rng(2)
        history = [(space.sample(rng), float(rng.random())) for _ in range(40)]
        for _ in range(500):
            proposal = kde_propose(history, space, rng)
            assert 1e-4 <= proposal["lr"] <= 1.0
            assert isinstance(proposal["k"], int) and 2 <= proposal["k"] <= 16
            assert proposal["b"] in (4, 12, 36)

    def test_beats_random_on_a_narrow_optimum(self):
        # a width-0.05 well at 0.73 on a gentle slope; the tolerance sits two
        # widths out, so a uniform draw lands inside at rate ~4%
        def well(config, budget):
            x = config["x"]
            return 1.0 - math.exp(-(((x - 0.73) / 0.05) ** 2)) + 0.1 * abs(x - 0.73)

        tolerance = well({"x": 0.75}, 0)

        def evaluations_to_tolerance(sampler, seed):
            config = TunerConfig(eval_budget=60.0, sampler=sampler, seed=seed)
            trace = successive_halving(
                well, LINE, config, np.random.default_rng(seed)
            )
            for count, evaluation in enumerate(trace.evaluations, start=1):
                if evaluation.score <= tolerance:
                    return count
            return len(trace.evaluations) + 1

        wins = sum(
            evaluations_to_tolerance("kde", seed)
            <= evaluations_to_tolerance("random", seed)
            for seed in range(100)
        )
        assert wins >= 70


class TestRunTuner:
    def test_random_search_end_to_end(self, space1, table1):
        result = run_tuner(
            "RANDOM_SEARCH",
            1,
            table1,
            config_space_preset(1),
            TunerConfig(eval_budget=12.0, seed=3),
        )
        assert result.kind == "RANDOM_SEARCH"
        assert result.space_id == 1
        assert result.sampler == "random"
        assert len(result.trace.evaluations) == 28
        assert result.audit_reads["test"] == 0
        assert result.audit_reads["validation"] > 0

        _, best_val = best_in_space(table1, space1, 108, metric="validation")
        times = [i.t_sim for i in result.incumbents]
        assert all(b > a for a, b in zip(times, times[1:]))
        for incumbent in result.incumbents:
            assert incumbent.val_regret >= 0.0
            assert incumbent.test_regret >= 0.0
            assert incumbent.val_error - incumbent.val_regret == pytest.approx(
                best_val
            )
            assert set(incumbent.config) == {"logit_l2", "noise_prob"}
        assert result.incumbents[-1].val_regret <= result.incumbents[0].val_regret

    def test_reruns_are_identical(self, table1):
        args = (
            "RANDOM_SEARCH",
            1,
            table1,
            config_space_preset(1),
            TunerConfig(eval_budget=12.0, seed=3),
        )
        first, second = run_tuner(*args), run_tuner(*args)
        assert first.trace == second.trace
        assert first.incumbents == second.incumbents

    def test_workers_do_not_change_the_result(self, table1):
        serial = run_tuner(
            "RANDOM_SEARCH",
            1,
            table1,
            config_space_preset(1),
            TunerConfig(eval_budget=12.0, seed=3),
        )
        threaded = run_tuner(
            "RANDOM_SEARCH",
            1,
            table1,
            config_space_preset(1),
            TunerConfig(eval_budget=12.0, seed=3, workers=2),
        )
        assert serial.trace.evaluations == threaded.trace.evaluations

    def test_seed_moves_the_proposals(self, table1):
        runs = [
            run_tuner(
                "RANDOM_SEARCH",
                1,
                table1,
                config_space_preset(1),
                TunerConfig(eval_budget=6.0, seed=seed),
            )
            for seed in (0, 1)
        ]
        assert runs[0].trace.evaluations[0].config != runs[1].trace.evaluations[0].config

    def test_kde_sampler_runs_clean(self, table1):
        result = run_tuner(
            "RANDOM_SEARCH",
            1,
            table1,
            config_space_preset(1),
            TunerConfig(eval_budget=12.0, seed=0, sampler="kde"),
        )
        assert result.sampler == "kde"
        assert result.audit_reads["test"] == 0
        assert result.incumbents

    def test_gdas_on_the_wide_space(self, table1):
        result = run_tuner(
            "GDAS",
            1,
            table1,
            config_space_preset(3),
            TunerConfig(eval_budget=6.0, seed=1),
        )
        assert result.audit_reads["test"] == 0
        assert result.incumbents
        for evaluation in result.trace.evaluations:
            assert isinstance(evaluation.config["samples_per_step"], int)
            assert evaluation.config["fidelity_budget"] in (4, 12, 36)

    def test_unknown_kind_is_wrapped(self, table1):
        with pytest.raises(
            RuntimeError, match=r"objective failed for sample 0 at budget 25"
        ):
            run_tuner(
                "NO_SUCH_ENGINE",
                1,
                table1,
                config_space_preset(1),
                TunerConfig(eval_budget=6.0),
            )
