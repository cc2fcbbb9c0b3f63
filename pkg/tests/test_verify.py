import copy
import json
import math

import pytest

from conftest import load_config

from nldisp.verify import (build_scenario, config_hash, sweep,
                           verify_continuity_L3_1, verify_monotone_L4_2,
                           verify_P2_2, verify_T1_1, verify_T1_2, verify_T1_3,
                           verify_T1_4, verify_T1_5, write_sweep_csv)

GAUSS = {"kind": "gaussian", "sigma": 1.0, "dim": 1, "mu": 1.0, "M": 4.0}
GAUSS_NARROW = {"kind": "gaussian", "sigma": 0.2, "dim": 1, "mu": 1.0, "M": 2.0}
TORUS16 = {"domain": "torus", "L": 16.0, "n": 64}
TORUS8PI = {"domain": "torus", "L": 8 * math.pi, "n": 128}
COS_X = {"expr": "cos(x)", "kind": "trig_periodic", "period": [2 * math.pi]}


def scenario(kernel, grid, coeff, **extra):
    cfg = {"kernel": kernel, "grid": grid, "coefficient": coeff}
    cfg.update(extra)
    return build_scenario(cfg)


class TestScenarioBuild:
    def test_flags_inferred(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.0"})
        assert scn.flags["time_independent"] and scn.flags["space_homogeneous"]

    def test_missing_block_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            build_scenario({"kernel": GAUSS, "grid": TORUS16})

    def test_size_limits(self):
        with pytest.raises(ValueError, match="exceeds"):
            scenario(GAUSS, {"domain": "torus", "L": 16.0, "n": 8192}, {"c0": "0.0"})
        with pytest.raises(ValueError, match="horizon"):
            scenario(GAUSS, TORUS16, {"c0": "0.0"}, lyapunov={"horizon": 1e6})

    def test_hash_is_stable(self):
        cfg = {"kernel": GAUSS, "grid": TORUS16, "coefficient": {"c0": "0.0"}}
        assert config_hash(cfg) == config_hash(json.loads(json.dumps(cfg)))
        assert config_hash(cfg) != config_hash({**cfg, "seed": 1})


class TestT1_1:
    def test_constant_scenario_passes(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.0"}, lyapunov={"horizon": 200.0})
        rep = verify_T1_1(scn)
        assert rep.verdict
        assert abs(rep.slacks["window_agreement"]) <= 1e-3
        assert rep.quantities["probe_above"] == "decay"
        assert rep.quantities["probe_below"] == "growth"

    def test_short_horizon_flagged(self):
        coeff = {"c0": "0.0", "modes": [
            {"amp": "1.0", "omega": 1.0, "theta": -math.pi / 2},
            {"amp": "1.0", "omega": math.sqrt(2), "theta": -math.pi / 2}]}
        scn = scenario(GAUSS, TORUS16, coeff, lyapunov={"horizon": 10.0})
        rep = verify_T1_1(scn)
        assert not rep.verdict
        assert any("inconclusive" in n for n in rep.notes)
        assert rep.failing()


class TestT1_2:
    def test_constant_scenario(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.5"}, lyapunov={"horizon": 200.0})
        rep = verify_T1_2(scn)
        assert rep.verdict
        assert rep.quantities["lambda_PE_prime"] == pytest.approx(1.5, abs=2e-2)
        assert rep.quantities["lambda_PE_lower"] == pytest.approx(1.5, abs=1e-6)
        assert rep.quantities["hat_a_plus_lambda0"] == pytest.approx(1.5, abs=1e-8)

    def test_time_independent_scenario(self):
        scn = scenario(GAUSS_NARROW, {"domain": "box", "lo": 0.0, "hi": 1.0, "n": 64},
                       {"c0": {"random": {"low": -0.5, "high": 0.5}}},
                       seed=3, lyapunov={"horizon": 300.0})
        rep = verify_T1_2(scn)
        assert rep.verdict, rep.failing()


class TestT1_3:
    def test_spacetime_cosine_clause1(self):
        coeff = {"modes": [{"amp": COS_X, "omega": 1.0, "theta": 0.0}]}
        scn = scenario(GAUSS, TORUS8PI, coeff, pe={"denominators": [3]})
        rep = verify_T1_3(scn, clauses=(1,))
        assert rep.verdict
        assert rep.quantities["sup_hat_a"] == 0.0
        assert rep.quantities["lambda_PE_lower"] >= -1e-2
        assert rep.notes  # approximant substitution note

    def test_box_clause2(self):
        scn = scenario(GAUSS_NARROW, {"domain": "box", "lo": 0.0, "hi": 1.0, "n": 64},
                       {"c0": "x"})
        rep = verify_T1_3(scn, clauses=(1, 2))
        assert rep.verdict
        assert rep.quantities["bar_a"] == pytest.approx(0.5, abs=1e-12)

    def test_torus_clause3(self):
        scn = scenario(GAUSS, TORUS8PI, {"c0": COS_X})
        rep = verify_T1_3(scn, clauses=(1, 3))
        assert rep.verdict
        assert rep.quantities["bound_torus"] == pytest.approx(1.0, abs=1e-12)
        assert rep.quantities["perron"] >= 1.0 - 1e-6

    def test_clause_preconditions(self):
        scn = scenario(GAUSS, TORUS8PI, {"c0": COS_X})
        with pytest.raises(ValueError):
            verify_T1_3(scn, clauses=(2,))   # torus is not the bounded-domain clause


class TestT1_4:
    def test_separable_chain(self):
        coeff = {"c0": COS_X, "modes": [{"amp": COS_X, "omega": 1.0, "theta": 0.0}]}
        scn = scenario(GAUSS, TORUS8PI, coeff, lyapunov={"horizon": 300.0})
        rep = verify_T1_4(scn, clauses=(1, 3))
        assert rep.verdict, rep.failing()

    def test_time_independent_collapse(self):
        scn = scenario(GAUSS, TORUS8PI, {"c0": COS_X})
        rep = verify_T1_4(scn)
        assert rep.verdict
        assert rep.quantities["lambda_PL"] == pytest.approx(
            rep.quantities["lambda_PL_hat"], abs=1e-10)

    def test_space_homogeneous_exact(self):
        coeff = {"c0": "0.3", "modes": [{"amp": "1.0", "omega": 1.0, "theta": 0.0}]}
        scn = scenario(GAUSS, TORUS16, coeff, lyapunov={"horizon": 300.0})
        rep = verify_T1_4(scn)
        assert rep.verdict
        assert rep.quantities["lambda_PL_hat"] == pytest.approx(1.3, abs=1e-8)


class TestT1_5:
    def test_constant(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.2"})
        rep = verify_T1_5(scn)
        assert rep.verdict
        assert rep.quantities["collapse_gap"] <= 1e-8

    def test_random_autonomous(self):
        scn = scenario(GAUSS_NARROW, {"domain": "box", "lo": 0.0, "hi": 1.0, "n": 64},
                       {"c0": {"random": {"low": -0.5, "high": 0.5}}}, seed=5)
        rep = verify_T1_5(scn)
        assert rep.verdict
        assert rep.quantities["collapse_gap"] <= 1e-6

    def test_periodic_separable(self):
        coeff = {"modes": [{"amp": COS_X, "omega": 2 * math.pi, "theta": 0.0}]}
        scn = scenario(GAUSS, TORUS8PI, coeff)
        rep = verify_T1_5(scn)
        assert rep.verdict
        assert rep.quantities["collapse_gap"] <= 1e-4

    def test_aperiodic_rejected(self):
        coeff = {"modes": [{"amp": "1.0", "omega": 1.0},
                           {"amp": "1.0", "omega": math.sqrt(2)}]}
        scn = scenario(GAUSS, TORUS16, coeff)
        with pytest.raises(ValueError, match="periodic"):
            verify_T1_5(scn)


class TestContinuity:
    def test_constant_shift_is_exact(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.0"}, lyapunov={"horizon": 300.0})
        a2 = scn.a.shifted(0.3)
        rep = verify_continuity_L3_1(scn, a2, with_pe_prime=False)
        assert rep.verdict
        assert rep.quantities["distance"] == pytest.approx(0.3, abs=1e-12)
        diff = abs(rep.quantities["lambda_PL_a1"] - rep.quantities["lambda_PL_a2"])
        assert diff == pytest.approx(0.3, abs=2e-3)

    def test_small_oscillatory_perturbation(self):
        from nldisp.coefficients import APField, Mode, constant_profile
        scn = scenario(GAUSS, TORUS16, {"c0": "0.0"}, lyapunov={"horizon": 300.0})
        a2 = APField(c0=constant_profile(0.0),
                     modes=(Mode(profile=constant_profile(0.1), omega=1.0),))
        rep = verify_continuity_L3_1(scn, a2, with_pe_prime=True)
        assert rep.verdict, rep.failing()
        assert rep.quantities["distance"] == pytest.approx(0.1, abs=1e-6)

    def test_identical_coefficients(self):
        scn = scenario(GAUSS, TORUS16, {"c0": "0.1"}, lyapunov={"horizon": 200.0})
        rep = verify_continuity_L3_1(scn, scn.a, with_pe_prime=False)
        assert rep.verdict
        assert abs(rep.quantities["lambda_PL_a1"] - rep.quantities["lambda_PL_a2"]) < 2e-3


class TestMonotonicity:
    BOX1 = {"domain": "box", "lo": 0.0, "hi": 1.0, "n": 64}
    BOX2 = {"domain": "box", "lo": 0.0, "hi": 2.0, "n": 128}

    @pytest.mark.parametrize("coeff", [
        {"c0": "0.0"},
        {"c0": "x"},
        {"c0": "0.0", "modes": [{"amp": "1.0", "omega": 1.0, "theta": -math.pi / 2}]},
    ])
    def test_nested_boxes(self, coeff):
        rep = verify_monotone_L4_2(GAUSS_NARROW, coeff, self.BOX1, self.BOX2)
        assert rep.verdict, rep.failing()
        assert rep.quantities["lambda_D1"] <= rep.quantities["lambda_D2"] + 1e-2

    def test_mismatched_mesh_rejected(self):
        with pytest.raises(ValueError, match="nested"):
            verify_monotone_L4_2(GAUSS_NARROW, {"c0": "0.0"}, self.BOX1,
                                 {"domain": "box", "lo": 0.0, "hi": 2.0, "n": 100})

    def test_non_containment_rejected(self):
        with pytest.raises(ValueError, match="contained"):
            verify_monotone_L4_2(GAUSS_NARROW, {"c0": "0.0"},
                                 {"domain": "box", "lo": -1.0, "hi": 1.0, "n": 128},
                                 self.BOX1)


class TestComparisonReport:
    def test_pass_on_periodic_scenario(self):
        coeff = {"modes": [{"amp": COS_X, "omega": 1.0, "theta": -math.pi / 2}]}
        scn = scenario(GAUSS, TORUS8PI, coeff)
        rep = verify_P2_2(scn)
        assert rep.verdict, rep.failing()
        assert len(rep.checks) == 6


class TestSweep:
    def test_empty_plan(self, tmp_path):
        rows = sweep({"runs": []})
        assert rows == []
        path = tmp_path / "sweep.csv"
        write_sweep_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert lines == ["scenario_id,theorem,quantity,value,bound,slack,verdict"]

    def test_amplitude_sweep_eigen_monotone(self):
        plan = load_config("sweep_amplitude.json")
        rows = sweep(plan)
        assert [r[0] for r in rows] == ["eps0.0", "eps0.5", "eps1.0"]
        lams = [float(r[3]) for r in rows]
        assert lams[0] <= lams[1] <= lams[2]
        assert lams[0] == pytest.approx(1.0, abs=1e-8)

    def test_time_amplitude_sweep_constant(self):
        runs = []
        for eps in (0.0, 0.5, 1.0):
            cfg = {"kernel": GAUSS, "grid": TORUS16,
                   "coefficient": {"c0": "0.0",
                                   "modes": [] if eps == 0.0 else
                                   [{"amp": str(eps), "omega": 1.0, "theta": 0.0}]},
                   "lyapunov": {"horizon": 300.0}}
            runs.append({"id": f"eps{eps}", "theorem": "lyapunov", "config": cfg})
        rows = sweep({"runs": runs})
        lams = [float(r[3]) for r in rows]
        assert all(lam == pytest.approx(1.0, abs=5e-3) for lam in lams)

    def test_failure_recorded_in_row(self):
        rows = sweep({"runs": [{"id": "bad", "theorem": "eigen",
                                "config": {"kernel": GAUSS}}]})
        assert rows[0][0] == "bad"
        assert rows[0][-1].startswith("error")


class TestDeterminism:
    def test_report_is_reproducible(self):
        cfg = {"kernel": GAUSS, "grid": TORUS16, "coefficient": {"c0": "0.0"},
               "lyapunov": {"horizon": 200.0}, "seed": 0}
        r1 = verify_T1_1(build_scenario(copy.deepcopy(cfg)))
        r2 = verify_T1_1(build_scenario(copy.deepcopy(cfg)))
        d1, d2 = r1.to_dict(), r2.to_dict()
        d1.pop("runtime_s"), d2.pop("runtime_s")
        assert json.dumps(d1, sort_keys=True) == json.dumps(d2, sort_keys=True)

    def test_seed_changes_only_diagnostics(self):
        base = {"kernel": GAUSS, "grid": TORUS16, "coefficient": {"c0": "0.0"},
                "lyapunov": {"horizon": 200.0}}
        v1 = verify_T1_1(build_scenario({**base, "seed": 0})).verdict
        v2 = verify_T1_1(build_scenario({**base, "seed": 99})).verdict
        assert v1 == v2 == True
