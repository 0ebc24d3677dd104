"""Acceptance suite: every build criterion at its stated tolerance.

Each test prints one PASS line when its criterion holds; a pytest
failure on any test is the corresponding FAIL line. Population values
for the end-to-end study are computed here from first principles
(bivariate-normal rectangle probabilities), independent of the library
code they check.
"""

import hashlib
import json
import os
import time
from importlib.resources import files

import numpy as np
import pytest
import yaml
from scipy.stats import multivariate_normal, norm

from psytext.cfa import CFAModelSpec, cfa_fit, discrepancy_and_gradient, with_fit_indices
from psytext.config import load_config
from psytext.errors import ParseAmbiguityError
from psytext.instrument import ResponseScale
from psytext.pipeline import (
    stage_reliability,
    stage_report,
    stage_score,
    stage_simulate,
    stage_validity,
)
from psytext.raters import STATUS_PARSE_FAILED, batch_score, parse_response, RetryPolicy
from psytext.ratings import covariance
from psytext.reliability import cronbach_alpha, mcdonald_omega

from conftest import ConstantProvider, compound_symmetry, continuous_matrix, make_instrument

DATA = files("psytext") / "data"


def announce(n, text):
    print(f"ACCEPTANCE {n}: PASS - {text}")


# ---------------------------------------------------------------------------
# 1. closed-form alpha oracle


def test_acceptance_1_alpha_closed_form():
    S = compound_symmetry(3, 0.5)
    assert abs(cronbach_alpha(S) - 0.75) <= 1e-12
    assert abs(cronbach_alpha(np.eye(3)) - 0.0) <= 1e-12
    assert abs(cronbach_alpha(np.ones((3, 3))) - 1.0) <= 1e-12

    best = min(
        _timed(lambda: (cronbach_alpha(S), cronbach_alpha(np.eye(3)), cronbach_alpha(np.ones((3, 3)))))
        for _ in range(20)
    )
    assert best < 1e-3, f"alpha took {best * 1e3:.3f} ms"
    announce(1, f"alpha oracle exact at 1e-12, runtime {best * 1e6:.1f} us < 1 ms")


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


# ---------------------------------------------------------------------------
# 2. omega oracle


def test_acceptance_2_omega_oracle():
    from psytext.factor_model import FactorModel

    model = FactorModel(
        item_ids=("i1", "i2", "i3", "i4"),
        factor_ids=("F1",),
        loadings=np.full((4, 1), 0.7),
        residual_variances=np.full(4, 0.51),
        factor_correlations=np.eye(1),
        structure={f"i{j + 1}": "F1" for j in range(4)},
    )
    omega = mcdonald_omega(model, "F1")
    assert abs(omega - 7.84 / 9.88) <= 1e-9

    S = compound_symmetry(3, 0.5)
    fit = cfa_fit(S, CFAModelSpec({f"i{j + 1}": "F1" for j in range(3)}, correlated=False), n=500)
    omega_fit = mcdonald_omega(fit.model, "F1")
    alpha = cronbach_alpha(S)
    assert abs(omega_fit - alpha) <= 1e-6
    assert abs(omega_fit - 0.75) <= 1e-6
    announce(2, f"omega = {omega:.9f} (= 7.84/9.88), fitted equal-loading omega = alpha = 0.75")


# ---------------------------------------------------------------------------
# 3. CFA population recovery


def test_acceptance_3_cfa_population_recovery():
    lam = np.array([0.8, 0.7, 0.6, 0.5])
    S1 = np.outer(lam, lam) + np.diag(1 - lam**2)
    t0 = time.perf_counter()
    fit1 = cfa_fit(S1, CFAModelSpec({f"i{j + 1}": "F1" for j in range(4)}, correlated=False), n=500)
    t1 = time.perf_counter() - t0
    assert fit1.discrepancy < 1e-8
    assert np.max(np.abs(fit1.model.loadings[:, 0] - lam)) < 1e-3
    assert t1 < 1.0

    L = np.zeros((6, 2))
    L[:3, 0] = L[3:, 1] = np.sqrt(0.5)
    Phi = np.array([[1.0, 0.3], [0.3, 1.0]])
    S2 = L @ Phi @ L.T + np.diag(1 - np.diag(L @ Phi @ L.T))
    structure = {f"i{j + 1}": ("F1" if j < 3 else "F2") for j in range(6)}
    t0 = time.perf_counter()
    fit2 = cfa_fit(S2, CFAModelSpec(structure, correlated=True), n=500)
    t2 = time.perf_counter() - t0
    assert fit2.discrepancy < 1e-8
    assert abs(fit2.model.factor_correlations[0, 1] - 0.3) < 1e-3
    assert t2 < 1.0
    announce(3, f"population recovery exact (F={fit1.discrepancy:.2e}, "
                f"phi12 err={abs(fit2.model.factor_correlations[0, 1] - 0.3):.2e}), "
                f"runtimes {t1 * 1e3:.0f} ms / {t2 * 1e3:.0f} ms < 1 s")


# ---------------------------------------------------------------------------
# 4. analytic gradient vs central differences


def test_acceptance_4_gradient_check():
    L = np.zeros((6, 2))
    L[:3, 0] = L[3:, 1] = np.sqrt(0.5)
    Phi = np.array([[1.0, 0.3], [0.3, 1.0]])
    S = L @ Phi @ L.T + np.diag(1 - np.diag(L @ Phi @ L.T))
    spec = CFAModelSpec({f"i{j + 1}": ("F1" if j < 3 else "F2") for j in range(6)}, correlated=True)

    rng = np.random.default_rng(2024)
    h = 1e-6
    worst = 0.0
    for _ in range(10):
        x = np.concatenate(
            [rng.uniform(-0.9, 0.9, 6), rng.uniform(0.2, 1.5, 6), rng.uniform(-0.5, 0.5, 1)]
        )
        _, grad = discrepancy_and_gradient(x, S, spec)
        fd = np.zeros_like(x)
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (
                discrepancy_and_gradient(xp, S, spec)[0]
                - discrepancy_and_gradient(xm, S, spec)[0]
            ) / (2 * h)
        rel = np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-10)
        worst = max(worst, rel)
        assert rel < 1e-5
    announce(4, f"analytic gradient matches central differences, worst rel err {worst:.2e} < 1e-5")


# ---------------------------------------------------------------------------
# 5. end-to-end simulated study (and 6: cache replay)


def coded_population_moments(loading, n_categories=4):
    """Exact first/second moments of threshold-coded latent responses.

    Latent responses of two same-factor items are bivariate normal with
    correlation loading^2; rectangle probabilities of that distribution
    give the exact covariance of the integer codes.
    """
    taus = norm.ppf(np.arange(1, n_categories) / n_categories)
    edges = np.concatenate([[-np.inf], taus, [np.inf]])
    codes = np.arange(1, n_categories + 1)
    p = np.diff(norm.cdf(edges))
    mu = float(np.sum(p * codes))
    var = float(np.sum(p * (codes - mu) ** 2))

    def coded_cov(rho):
        mvn = multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])

        def F(a, b):
            if np.isneginf(a) or np.isneginf(b):
                return 0.0
            return float(mvn.cdf([min(a, 8.0), min(b, 8.0)]))

        total = 0.0
        for i in range(n_categories):
            for j in range(n_categories):
                pij = (
                    F(edges[i + 1], edges[j + 1])
                    - F(edges[i], edges[j + 1])
                    - F(edges[i + 1], edges[j])
                    + F(edges[i], edges[j])
                )
                total += pij * (codes[i] - mu) * (codes[j] - mu)
        return total

    c_within = coded_cov(loading * loading)
    return var, c_within


def acceptance_config(tmp_path):
    doc = {
        "instrument": str(DATA / "simulated_study.yaml"),
        "corpus": "out/simulated/corpus.jsonl",
        "criteria": "out/simulated/criteria.csv",
        "criteria_meta": "out/simulated/criteria_meta.yaml",
        "output_dir": "out",
        "cache": "cache.jsonl",
        "master_seed": 7,
        "holdout_fraction": 0.5,
        "provider": {"kind": "simulated"},
        "analysis": {"retention": "parallel", "parallel_reps": 100},
        "simulation": {
            "n_texts": 500,
            "loading": 0.8,
            "factor_correlation": 0.3,
            "criterion_name": "theta_proxy",
            "criterion_factor": "clarity",
            "criterion_r": 0.6,
            "criterion_reliability": 1.0,
        },
    }
    path = tmp_path / "acceptance.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return str(path)


def tree_hash(root):
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for fname in sorted(filenames):
            p = os.path.join(dirpath, fname)
            digest.update(os.path.relpath(p, root).encode())
            digest.update(open(p, "rb").read())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("acceptance")
    config = load_config(acceptance_config(tmp_path))
    t0 = time.perf_counter()
    stage_simulate(config)
    stage_reliability(config)
    stage_validity(config)
    stage_report(config)
    elapsed = time.perf_counter() - t0
    return tmp_path, config, elapsed


def test_acceptance_5_end_to_end_simulated_study(study):
    tmp_path, config, elapsed = study
    out = tmp_path / "out"

    assert elapsed < 60.0, f"pipeline took {elapsed:.1f} s"

    retention = json.loads((out / "retention.json").read_text())
    assert retention["retained"] == 2

    cfa_doc = json.loads((out / "cfa_fit.json").read_text())
    loadings = np.asarray(cfa_doc["model"]["loadings"], dtype=float)
    own = loadings[loadings != 0.0]
    assert own.size == 8
    assert np.max(np.abs(own - 0.8)) <= 0.10, f"loadings {own}"

    # population alpha / omega of the coded items, from first principles
    var, c = coded_population_moments(0.8)
    k = 4
    total_var = k * var + k * (k - 1) * c
    alpha_pop = (k / (k - 1)) * (1 - (k * var) / total_var)
    omega_pop = (k * c / (3 * c + var)) / k * 4  # = 4c / (3c + var)
    reliability = json.loads((out / "reliability_report.json").read_text())
    for f in reliability["factors"]:
        assert abs(f["alpha"] - alpha_pop) <= 0.05, (f["factor_id"], f["alpha"], alpha_pop)
        assert abs(f["omega"] - omega_pop) <= 0.05, (f["factor_id"], f["omega"], omega_pop)

    validity = json.loads((out / "validity_report.json").read_text())
    entries = {(e["factor_id"], e["criterion"]): e for e in validity["entries"]}
    clarity = entries[("clarity", "theta_proxy")]
    omega_clarity = [f["omega"] for f in reliability["factors"] if f["factor_id"] == "clarity"][0]
    predicted = 0.6 * np.sqrt(omega_clarity)
    assert abs(clarity["r_raw"] - predicted) <= 0.10, (clarity["r_raw"], predicted)
    assert clarity["sign_consistent"] is True

    # byte-identical output tree on rerun (warm cache, same seed)
    h1 = tree_hash(out)
    stage_simulate(config)
    stage_reliability(config)
    stage_validity(config)
    stage_report(config)
    h2 = tree_hash(out)
    assert h1 == h2

    announce(
        5,
        f"retained 2 factors; loadings within {np.max(np.abs(own - 0.8)):.3f} of 0.8; "
        f"alpha/omega within 0.05 of population ({alpha_pop:.3f}); "
        f"r_raw={clarity['r_raw']:.3f} vs predicted {predicted:.3f}; "
        f"tree byte-identical; runtime {elapsed:.1f} s < 60 s",
    )


def test_acceptance_6_cache_replay(study):
    tmp_path, config, _ = study
    out = tmp_path / "out"
    exports = ["records.jsonl", "matrix_raw.csv", "matrix_keyed.csv",
               "development.csv", "holdout.csv"]
    before = {name: (out / name).read_bytes() for name in exports}
    result = stage_score(config)
    assert result.provider_calls == 0
    for name in exports:
        assert (out / name).read_bytes() == before[name], name
    announce(6, "warm-cache rescore made 0 provider calls with byte-identical exports")


# ---------------------------------------------------------------------------
# 7. parsing suite


def test_acceptance_7_parsing_suite():
    scale = ResponseScale(
        labels=("strongly disagree", "disagree", "agree", "strongly agree"),
        aliases=(
            ("strong disagree", "strongly disagree"),
            ("strong agree", "strongly agree"),
            ("somewhat disagree", "disagree"),
            ("somewhat agree", "agree"),
        ),
    )
    for label, code in zip(scale.labels, scale.codes):
        assert parse_response(label, scale) == code
    documented_variants = {
        "Strongly agree": 4,
        "  disagree.": 2,
        "AGREE": 3,
        "\tstrongly disagree!\n": 1,
        "strong agree": 4,
        "Somewhat disagree": 2,
        "Answer: strongly disagree.": 1,
        "The author disagrees": 2,
    }
    for raw, code in documented_variants.items():
        assert parse_response(raw, scale) == code, raw

    with pytest.raises(ParseAmbiguityError):
        parse_response("I would say the author agrees, even strongly agrees", scale)

    # parse failures surface as missing cells, never as exceptions
    inst = make_instrument(1, 3, scale=scale)
    from psytext.ratings import assemble_matrix
    from psytext.corpus import TextRecord

    records = batch_score(
        inst,
        [TextRecord(id="t1", text="x")],
        ConstantProvider("no usable answer"),
        retry=RetryPolicy(max_attempts=2, backoff_base=0.0),
    )
    assert all(r.status == STATUS_PARSE_FAILED for r in records)
    matrix = assemble_matrix(records, inst)
    assert matrix.missing.all()
    announce(7, "all canonical labels and documented variants parse; ambiguity and "
                "failure paths end as missing cells")


# ---------------------------------------------------------------------------
# 8. degenerate inputs


def test_acceptance_8_degenerate_inputs():
    # saturated single-factor model
    lam = np.array([0.8, 0.7, 0.6])
    S = np.outer(lam, lam) + np.diag(1 - lam**2)
    fit = cfa_fit(S, CFAModelSpec({f"i{j + 1}": "F1" for j in range(3)}, correlated=False), n=100)
    fit = with_fit_indices(fit, S, 100)
    assert fit.df == 0
    assert not fit.fit_indices.defined

    # zero-variance item excluded with a warning, not an error
    X = np.column_stack([np.full(30, 2.0), 1.0 + np.arange(30) % 3, 1.0 + np.arange(30) % 4])
    with pytest.warns(UserWarning, match="zero-variance"):
        res = covariance(continuous_matrix(X))
    assert res.zero_variance_items == ("i1",)

    # Heywood-prone sample: n = 30 from a weak factor terminates with
    # reported bound activity
    lam_w = np.array([0.9, 0.4, 0.3, 0.3])
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(30)
    Xw = np.outer(theta, lam_w) + rng.standard_normal((30, 4)) * np.sqrt(1 - lam_w**2)
    Sw = np.cov(Xw, rowvar=False, ddof=1)
    fit_w = cfa_fit(Sw, CFAModelSpec({f"i{j + 1}": "F1" for j in range(4)}, correlated=False), n=30)
    assert fit_w.bound_active
    assert fit_w.converged
    announce(8, "saturated df=0 undefined indices; zero-variance exclusion warned; "
                f"Heywood bound active on {list(fit_w.bound_active)} without failure")
