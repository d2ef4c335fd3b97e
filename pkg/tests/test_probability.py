import numpy as np
import pytest

from adfsdca import (
    ZeroResidueError,
    case_params,
    compute_residues,
    contraction_certificate,
    eso_v,
    make_loss,
    marginals_of,
    optimal_probabilities,
    parse_libsvm,
    plan_build,
    plan_draw_many,
    synthetic_dataset,
    theta_lower_bound,
    theta_of,
)
from adfsdca.probability import CaseParams, ResidueVector


def residues_from(kappa):
    kappa = np.asarray(kappa, dtype=float)
    support = kappa != 0.0
    return ResidueVector(kappa=kappa, support=support, sq_norm=float(kappa @ kappa))


def random_case(rng, n):
    return CaseParams(
        case="all_convex",
        beta=rng.uniform(0.2, 5.0, n),
        gamma=float(rng.uniform(0.1, 20.0)),
        lam=float(rng.uniform(0.01, 1.0)),
        n=n,
    )


def test_residue_fixed_point_support_empty():
    ds = parse_libsvm("1 1:1 2:-1\n-1 2:2")
    loss = make_loss("quadratic")
    w = np.array([0.3, -0.2])
    alpha = -loss.derivative(ds.matvec(w), ds.labels)
    res = compute_residues(alpha, w, ds, loss)
    assert not res.support.any()
    assert np.all(res.kappa == 0.0)


def test_residue_at_zero_state():
    ds = parse_libsvm("1 1:1\n-1 1:2")
    res = compute_residues(np.zeros(2), np.zeros(1), ds, make_loss("quadratic"))
    assert np.array_equal(res.kappa, [-1.0, 1.0])


def test_residue_dense_oracle():
    rng = np.random.Generator(np.random.Philox(5))
    ds = synthetic_dataset(5, 3, 0.9, seed=2)
    loss = make_loss("quadratic")
    alpha = rng.standard_normal(5)
    w = rng.standard_normal(3)
    res = compute_residues(alpha, w, ds, loss)
    dense = np.zeros((5, 3))
    for i in range(5):
        idx, vals = ds.row(i)
        dense[i, idx] = vals
    for i in range(5):
        margin = float(dense[i] @ w)
        expected = alpha[i] + (margin - ds.labels[i])
        assert res.kappa[i] == pytest.approx(expected, abs=1e-12)


def test_residue_dimension_mismatch():
    ds = parse_libsvm("1 1:1")
    with pytest.raises(ValueError):
        compute_residues(np.zeros(2), np.zeros(1), ds, make_loss("quadratic"))


def test_case_params_values():
    ds = parse_libsvm("1 1:3 2:4\n-1 1:1")
    lam = 0.5
    cp1 = case_params(ds, make_loss("quadratic"), lam, "all_convex")
    assert np.allclose(cp1.beta, [1.0, 1.0])
    assert cp1.gamma == pytest.approx(2 * lam)
    cp2 = case_params(ds, make_loss("quadratic"), lam, "average_convex")
    assert np.allclose(cp2.beta, [13.0 / 25.0, 13.0])
    assert cp2.gamma == pytest.approx(2 * 13.0**2)
    with pytest.raises(ValueError):
        case_params(ds, make_loss("quadratic"), -1.0)
    with pytest.raises(ValueError):
        case_params(ds, make_loss("quadratic"), lam, "nonconvex")


def test_optimal_probabilities_single_support():
    res = residues_from([0.0, 3.0, 0.0])
    cp = CaseParams("all_convex", np.ones(3), 1.0, 0.5, 3)
    p = optimal_probabilities(res, cp, np.ones(3))
    assert np.array_equal(p, [0.0, 1.0, 0.0])


def test_optimal_probabilities_symmetry():
    res = residues_from([1.0, -1.0, 1.0, -1.0])
    cp = CaseParams("all_convex", np.full(4, 2.0), 3.0, 0.1, 4)
    p = optimal_probabilities(res, cp, np.full(4, 1.5))
    assert np.allclose(p, 0.25, rtol=1e-12)


def test_optimal_probabilities_coherence_bitwise():
    rng = np.random.Generator(np.random.Philox(8))
    for _ in range(50):
        n = int(rng.integers(2, 30))
        kappa = rng.standard_normal(n)
        kappa[rng.random(n) < 0.4] = 0.0
        if not np.any(kappa):
            kappa[0] = 1.0
        res = residues_from(kappa)
        cp = random_case(rng, n)
        p = optimal_probabilities(res, cp, rng.uniform(0.1, 3.0, n))
        assert np.all(p[~res.support] == 0.0)  # exact zeros off support
        assert np.all(p[res.support] > 0.0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_optimal_probabilities_empty_support():
    res = residues_from([0.0, 0.0])
    cp = CaseParams("all_convex", np.ones(2), 1.0, 0.5, 2)
    with pytest.raises(ZeroResidueError):
        optimal_probabilities(res, cp, np.ones(2))


def test_theta_single_coordinate_formula():
    res = residues_from([1.0])
    cp = CaseParams("all_convex", np.array([2.0]), 3.0, 0.7, 1)
    v = np.array([1.3])
    nl2 = (cp.n * cp.lam) ** 2
    expected = nl2 * cp.beta[0] / (nl2 * cp.beta[0] + v[0] * cp.gamma)
    assert theta_of(res, np.array([1.0]), cp, v) == pytest.approx(expected, rel=1e-14)


def test_theta_closed_form_at_optimum():
    rng = np.random.Generator(np.random.Philox(3))
    for _ in range(100):
        n = int(rng.integers(2, 20))
        kappa = rng.standard_normal(n)
        res = residues_from(kappa)
        cp = random_case(rng, n)
        v = rng.uniform(0.1, 4.0, n)
        p = optimal_probabilities(res, cp, v)
        nl2 = (cp.n * cp.lam) ** 2
        root = np.sqrt(v * cp.gamma + nl2 * cp.beta)
        closed = nl2 * np.sum(cp.beta * kappa**2) / np.sum(root * np.abs(kappa)) ** 2
        assert theta_of(res, p, cp, v) == pytest.approx(closed, rel=1e-12)
        assert 0.0 < theta_of(res, p, cp, v) < 1.0


def test_theta_uniform_no_better_than_optimal():
    rng = np.random.Generator(np.random.Philox(4))
    for _ in range(100):
        n = int(rng.integers(2, 20))
        res = residues_from(rng.standard_normal(n))
        cp = random_case(rng, n)
        v = rng.uniform(0.1, 4.0, n)
        p_star = optimal_probabilities(res, cp, v)
        uniform = np.full(n, 1.0 / n)
        assert theta_of(res, uniform, cp, v) <= theta_of(res, p_star, cp, v) * (1 + 1e-12)


def test_theta_incoherent_probabilities_rejected():
    res = residues_from([1.0, 2.0])
    cp = CaseParams("all_convex", np.ones(2), 1.0, 0.5, 2)
    with pytest.raises(ValueError, match="incoherent"):
        theta_of(res, np.array([1.0, 0.0]), cp, np.ones(2))


def test_theta_lower_bound_identity_case1(synth500, quad, lam500):
    cp = case_params(synth500, quad, lam500, "all_convex")
    bound = quad.bind(synth500)
    lb = theta_lower_bound(cp, synth500.norms)
    assert lb == pytest.approx(1.0 / (synth500.n + bound.L_bar / lam500), rel=1e-12)


def test_theta_lower_bound_unit_norms():
    ds = parse_libsvm("\n".join(f"1 {i+1}:1" for i in range(8)))
    lam = 0.3
    cp = case_params(ds, make_loss("quadratic"), lam)
    lb = theta_lower_bound(cp, ds.norms)
    assert lb == pytest.approx(1.0 / (8 + 1.0 / lam), rel=1e-12)


def test_theta_lower_bound_below_adaptive():
    rng = np.random.Generator(np.random.Philox(6))
    for _ in range(100):
        n = int(rng.integers(2, 20))
        res = residues_from(rng.standard_normal(n))
        cp = random_case(rng, n)
        v = rng.uniform(0.1, 4.0, n)
        p_star = optimal_probabilities(res, cp, v)
        assert theta_lower_bound(cp, v) <= theta_of(res, p_star, cp, v) * (1 + 1e-12)


def test_theta_lower_bound_linear_in_batch():
    rng = np.random.Generator(np.random.Philox(7))
    cp = random_case(rng, 50)
    v = rng.uniform(0.1, 4.0, 50)
    lb1 = theta_lower_bound(cp, v, 1)
    for b in (2, 4, 8):
        assert theta_lower_bound(cp, v, b) == pytest.approx(min(1.0, b * lb1), rel=1e-12)
    assert theta_lower_bound(cp, v, 10**9) == 1.0  # capped


def test_certificate_sign_around_theta():
    rng = np.random.Generator(np.random.Philox(11))
    res = residues_from(rng.standard_normal(12))
    cp = random_case(rng, 12)
    v = rng.uniform(0.1, 4.0, 12)
    p = optimal_probabilities(res, cp, v)
    th = theta_of(res, p, cp, v)
    below, _ = contraction_certificate(res, p, 0.5 * th, cp, v)
    at, scale = contraction_certificate(res, p, th, cp, v)
    above, _ = contraction_certificate(res, p, 1.5 * th, cp, v)
    assert below < 0.0
    assert abs(at) <= 1e-12 * scale
    assert above > 0.0


def test_eso_v_b1_identity(synth500):
    for mode in ("example_nnz", "feature_degree"):
        eso = eso_v(synth500, 1, mode)
        assert np.array_equal(eso.v, synth500.norms)


def test_eso_v_diagonal_matrix():
    ds = parse_libsvm("\n".join(f"1 {i+1}:{i+2}" for i in range(5)))
    for b in (1, 2, 4):
        for mode in ("example_nnz", "feature_degree"):
            eso = eso_v(ds, b, mode)
            assert np.array_equal(eso.v, ds.norms)  # omega = 1 for singleton rows


def test_eso_v_monotone_in_batch(synth500):
    for mode in ("example_nnz", "feature_degree"):
        prev = eso_v(synth500, 1, mode).v
        for b in (2, 4, 8, 64, 500):
            cur = eso_v(synth500, b, mode).v
            assert np.all(cur >= prev)
            prev = cur


def test_eso_v_dense_modes_agree():
    ds = parse_libsvm("\n".join("1 1:1 2:1 3:1 4:1" for _ in range(4)))
    for b in (1, 2, 3, 4):
        paper = eso_v(ds, b, "example_nnz")
        feat = eso_v(ds, b, "feature_degree")
        assert paper.omega == feat.omega == 4
        assert np.array_equal(paper.v, feat.v)
        assert np.array_equal(paper.v, np.minimum(b, 4) * ds.norms)
    with pytest.raises(ValueError):
        eso_v(ds, 0)
    with pytest.raises(ValueError):
        eso_v(ds, 5)


def regularized_max_eig(M):
    dd = np.sqrt(np.diag(M))
    scaled = M / np.outer(dd, dd)
    return float(np.linalg.eigvalsh(scaled).max())


def test_eso_majorant_bruteforce_4x4():
    ds = parse_libsvm("\n".join("1 1:1 2:1 3:1 4:1" for _ in range(4)))
    dense = ds.matrix.toarray()
    gram = dense @ dense.T  # example-indexed Gram matrix
    lam_prime = regularized_max_eig(gram)
    assert lam_prime <= ds.max_feature_degree + 1e-9
    assert lam_prime <= ds.max_example_nnz + 1e-9


def test_eso_inequality_monte_carlo():
    ds = synthetic_dataset(24, 10, 0.5, seed=13)
    b = 4
    rng = np.random.Generator(np.random.Philox(17))
    h = rng.standard_normal(ds.n)
    q = np.full(ds.n, b / ds.n) + rng.uniform(-0.5, 0.5, ds.n) * (b / ds.n)
    q *= b / q.sum()
    plan = plan_build(q, b)
    q_exact = marginals_of(plan)
    eso = eso_v(ds, b, "example_nnz")
    draws = 10**5
    batches = plan_draw_many(plan, rng, draws)
    dense = ds.matrix.toarray()
    contrib = dense * h[:, None]  # row i holds h_i * x_i
    sq = np.einsum("kd,kd->k", contrib[batches].sum(axis=1), contrib[batches].sum(axis=1))
    bound = float(np.sum(eso.v * q_exact * h * h))
    mean = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(draws))
    assert mean <= bound + 3 * se
