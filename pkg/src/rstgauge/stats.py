"""Statistical analysis: group tests, beta regression, consistency study.

The regression models a squeezed error rate in (0,1) with a logit-link
beta likelihood, a constant dispersion, and ridge-penalized per-document
intercepts standing in for a document random effect.  The penalized
approximation keeps fits deterministic and dependency-free; outputs are
labeled as approximations wherever they surface.
"""

from __future__ import annotations

import math
import warnings as _warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from .core import CorpusError, ROOT_LABEL
from .features import FeatureRow, annotation_edu
from .ingest import Corpus
from .metrics import ErrorProfile

try:  # py3.9+: importlib.resources.files
    from importlib import resources as importlib_resources
except ImportError:  # pragma: no cover
    import importlib_resources  # type: ignore


class AnalysisError(ValueError):
    """Raised for statistically invalid inputs (degenerate groups,
    rank-deficient designs, non-nested model pairs)."""


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    effect_size: float
    df: float
    p_value: float
    kind: str = ""

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def welch_t(group_a: Sequence[float], group_b: Sequence[float]) -> TestResult:
    """Two-sided Welch t test with Welch-Satterthwaite df; the effect size
    is Cohen's d from the pooled SD, reported as a magnitude."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("both groups need at least 2 observations")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        raise AnalysisError("both groups have zero variance")
    sa, sb = va / a.size, vb / b.size
    t = (float(a.mean()) - float(b.mean())) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(special.stdtr(df, -abs(t)))
    pooled = math.sqrt(((a.size - 1) * va + (b.size - 1) * vb) / (a.size + b.size - 2))
    d = abs(float(a.mean()) - float(b.mean())) / pooled if pooled > 0 else 0.0
    return TestResult(statistic=t, effect_size=d, df=df, p_value=p, kind="welch_t")


def chi_square_phi(table: Sequence[Sequence[float]]) -> TestResult:
    """Pearson chi-square on a 2x2 table, no continuity correction, df=1;
    the effect size is phi = sqrt(chi2/n)."""
    m = np.asarray(table, dtype=float)
    if m.shape != (2, 2):
        raise AnalysisError(f"expected a 2x2 table, got shape {m.shape}")
    if (m < 0).any():
        raise AnalysisError("counts must be non-negative")
    rows = m.sum(axis=1)
    cols = m.sum(axis=0)
    if (rows == 0).any() or (cols == 0).any():
        raise AnalysisError("zero marginal in the 2x2 table")
    n = float(m.sum())
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    chi2 = n * (a * d - b * c) ** 2 / (rows[0] * rows[1] * cols[0] * cols[1])
    phi = math.sqrt(chi2 / n)
    p = float(special.chdtrc(1.0, chi2))
    return TestResult(statistic=float(chi2), effect_size=phi, df=1.0, p_value=p, kind="chi_square")


# ---------------------------------------------------------------------------
# beta regression


@dataclass(frozen=True)
class BetaRegFit:
    """A fitted logit-link beta regression with penalized document offsets.

    ``log_likelihood`` is the unpenalized likelihood evaluated at the
    penalized estimates (what the likelihood-ratio test compares);
    ``penalized_log_likelihood`` includes the ridge term the optimizer
    maximized.
    """

    response: str
    feature_names: tuple[str, ...]
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    p_values: dict[str, float]
    precision: float
    doc_intercepts: dict[str, float]
    log_likelihood: float
    penalized_log_likelihood: float
    penalty: float
    n_obs: int
    n_iter: int
    converged: bool
    warnings: tuple[str, ...] = ()

    @property
    def n_fixed_params(self) -> int:
        return len(self.feature_names)


def design_matrix(
    rows: Sequence[FeatureRow], features: Sequence[str]
) -> tuple[np.ndarray, list[str], list[str]]:
    """Fixed-effect design from feature rows: an intercept, one column per
    numeric/boolean feature, and reference-coded dummies (first level
    alphabetically dropped) per categorical feature."""
    if not rows:
        raise AnalysisError("no rows to fit on")
    names: list[str] = ["(intercept)"]
    columns: list[np.ndarray] = [np.ones(len(rows))]
    for feat in features:
        values = [row.value(feat) for row in rows]
        first = values[0]
        if isinstance(first, bool):
            columns.append(np.array([1.0 if v else 0.0 for v in values]))
            names.append(feat)
        elif isinstance(first, (int, float)):
            columns.append(np.array([float(v) for v in values]))
            names.append(feat)
        elif isinstance(first, str):
            levels = sorted(set(values))
            for level in levels[1:]:
                columns.append(np.array([1.0 if v == level else 0.0 for v in values]))
                names.append(f"{feat}={level}")
        else:
            raise AnalysisError(f"feature {feat!r} has unsupported type {type(first).__name__}")
    X = np.column_stack(columns)
    docs = [row.doc_id for row in rows]
    return X, names, docs


def _squeeze(y: np.ndarray) -> np.ndarray:
    """Move boundary responses into the open interval:
    y' = (y*(n-1) + 0.5) / n."""
    n = y.size
    return (y * (n - 1) + 0.5) / n


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def beta_fit_matrix(
    X: np.ndarray,
    names: Sequence[str],
    y: np.ndarray,
    docs: Optional[Sequence[str]] = None,
    response: str = "y",
    penalty: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> BetaRegFit:
    """Damped Fisher scoring for the penalized beta regression.

    ``docs`` assigns each row to a document; per-document intercepts get a
    ridge penalty of weight ``penalty``.  Convergence is declared when the
    largest absolute score entry drops below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = _squeeze(np.asarray(y, dtype=float))
    if y.min() <= 0.0 or y.max() >= 1.0:
        raise AnalysisError("responses must lie in [0,1] before squeezing")
    n, p = X.shape
    if len(names) != p:
        raise AnalysisError("design matrix and names disagree")
    if np.linalg.matrix_rank(X) < p:
        raise AnalysisError("rank-deficient design matrix")

    fit_warnings: list[str] = []
    if n < 10 * p:
        fit_warnings.append(
            f"only {n} rows for {p} coefficients; at least {10 * p} are advisable"
        )

    doc_names: list[str] = []
    if docs is not None:
        doc_names = sorted(set(docs))
        doc_index = {d: i for i, d in enumerate(doc_names)}
        Z = np.zeros((n, len(doc_names)))
        for i, d in enumerate(docs):
            Z[i, doc_index[d]] = 1.0
        A = np.hstack([X, Z])
    else:
        A = X
    D = len(doc_names)
    k = p + D  # linear coefficients

    pen_diag = np.zeros(k)
    pen_diag[p:] = penalty

    logit_y = np.log(y) - np.log1p(-y)
    log_y = np.log(y)
    log_1my = np.log1p(-y)

    # Start from a ridge least-squares fit on the logit scale and a
    # moment-based precision.
    lhs = A.T @ A + np.diag(pen_diag + 1e-6)
    coef = np.linalg.solve(lhs, A.T @ logit_y)
    mu0 = np.clip(_sigmoid(A @ coef), 1e-6, 1 - 1e-6)
    resid_var = float(np.var(y - mu0))
    if resid_var <= 0 or not np.isfinite(resid_var):
        phi = 10.0
    else:
        phi = float(np.clip(np.mean(mu0 * (1 - mu0)) / resid_var - 1.0, 0.5, 1e4))
    gamma = math.log(phi)

    def loglik(coef_v: np.ndarray, gamma_v: float) -> tuple[float, float]:
        phi_v = math.exp(gamma_v)
        mu = np.clip(_sigmoid(A @ coef_v), 1e-10, 1 - 1e-10)
        a = mu * phi_v
        b = (1 - mu) * phi_v
        ll = float(
            np.sum(
                special.gammaln(phi_v)
                - special.gammaln(a)
                - special.gammaln(b)
                + (a - 1) * log_y
                + (b - 1) * log_1my
            )
        )
        pen = 0.5 * float(pen_diag @ (coef_v**2))
        return ll, ll - pen

    def score_at(coef_v: np.ndarray, gamma_v: float) -> np.ndarray:
        phi_v = math.exp(gamma_v)
        mu = np.clip(_sigmoid(A @ coef_v), 1e-10, 1 - 1e-10)
        a = mu * phi_v
        b = (1 - mu) * phi_v
        dmu = mu * (1 - mu)
        mustar = special.digamma(a) - special.digamma(b)
        s_eta = phi_v * (logit_y - mustar) * dmu
        g_coef = A.T @ s_eta - pen_diag * coef_v
        g_gamma = phi_v * float(
            np.sum(mu * (logit_y - mustar) + log_1my - special.digamma(b) + special.digamma(phi_v))
        )
        return np.concatenate([g_coef, [g_gamma]])

    _, pen_ll = loglik(coef, gamma)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        score = score_at(coef, gamma)
        score_max = float(np.max(np.abs(score)))
        if score_max < tol:
            converged = True
            break

        phi_v = math.exp(gamma)
        mu = np.clip(_sigmoid(A @ coef), 1e-10, 1 - 1e-10)
        a = mu * phi_v
        b = (1 - mu) * phi_v
        dmu = mu * (1 - mu)
        tri_a = special.polygamma(1, a)
        tri_b = special.polygamma(1, b)
        w = phi_v**2 * (tri_a + tri_b) * dmu**2
        c = phi_v * (tri_a * mu - tri_b * (1 - mu)) * dmu
        d_gamma = phi_v**2 * float(
            np.sum(tri_a * mu**2 + tri_b * (1 - mu) ** 2)
        ) - phi_v**2 * y.size * float(special.polygamma(1, phi_v))

        info = np.empty((k + 1, k + 1))
        info[:k, :k] = A.T @ (A * w[:, None]) + np.diag(pen_diag)
        cross = A.T @ (c * phi_v)
        info[:k, k] = cross
        info[k, :k] = cross
        info[k, k] = d_gamma
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(info + 1e-6 * np.eye(k + 1), score)

        # Damped step: accept on likelihood improvement, or, near the
        # optimum where the likelihood is flat at float resolution, on a
        # shrinking score norm.
        accepted = False
        damp = 1.0
        while damp > 1e-10:
            new_coef = coef + damp * step[:k]
            new_gamma = min(gamma + damp * step[k], 50.0)  # keep exp finite
            _, new_pen_ll = loglik(new_coef, new_gamma)
            if np.isfinite(new_pen_ll):
                if new_pen_ll >= pen_ll - 1e-12:
                    accepted = True
                    break
                new_max = float(np.max(np.abs(score_at(new_coef, new_gamma))))
                if new_max < score_max:
                    accepted = True
                    break
            damp /= 2.0
        if not accepted:
            break  # stagnated; the convergence check below decides
        coef, gamma, pen_ll = new_coef, new_gamma, new_pen_ll

    if not converged:
        score_max = float(np.max(np.abs(score_at(coef, gamma))))
        if score_max < tol:
            converged = True
        else:
            fit_warnings.append(
                f"did not converge after {it} iterations (max |score| {score_max:.3g})"
            )

    # Standard errors from the penalized information at the optimum.
    phi_v = math.exp(gamma)
    mu = np.clip(_sigmoid(A @ coef), 1e-10, 1 - 1e-10)
    a = mu * phi_v
    b = (1 - mu) * phi_v
    dmu = mu * (1 - mu)
    tri_a = special.polygamma(1, a)
    tri_b = special.polygamma(1, b)
    w = phi_v**2 * (tri_a + tri_b) * dmu**2
    c = phi_v * (tri_a * mu - tri_b * (1 - mu)) * dmu
    d_gamma = phi_v**2 * float(np.sum(tri_a * mu**2 + tri_b * (1 - mu) ** 2)) - phi_v**2 * y.size * float(
        special.polygamma(1, phi_v)
    )
    info = np.empty((k + 1, k + 1))
    info[:k, :k] = A.T @ (A * w[:, None]) + np.diag(pen_diag)
    cross = A.T @ (c * phi_v)
    info[:k, k] = cross
    info[k, :k] = cross
    info[k, k] = d_gamma
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(info + 1e-8 * np.eye(k + 1))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    coeffs = {name: float(coef[i]) for i, name in enumerate(names)}
    errors = {name: float(se[i]) for i, name in enumerate(names)}
    pvals = {}
    for i, name in enumerate(names):
        if se[i] > 0:
            z = coef[i] / se[i]
            pvals[name] = float(special.erfc(abs(z) / math.sqrt(2.0)))
        else:
            pvals[name] = float("nan")

    ll, pen_ll = loglik(coef, gamma)
    return BetaRegFit(
        response=response,
        feature_names=tuple(names),
        coefficients=coeffs,
        std_errors=errors,
        p_values=pvals,
        precision=phi_v,
        doc_intercepts={d: float(coef[p + i]) for i, d in enumerate(doc_names)},
        log_likelihood=ll,
        penalized_log_likelihood=pen_ll,
        penalty=penalty,
        n_obs=y.size,
        n_iter=it,
        converged=converged,
        warnings=tuple(fit_warnings),
    )


def beta_fit(
    rows: Sequence[FeatureRow],
    features: Sequence[str],
    response: str = "scaled_attach",
    penalty: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-8,
    doc_effects: bool = True,
) -> BetaRegFit:
    """Fit the penalized beta regression on feature rows.

    ``response`` names a scaled error field (``scaled_attach``,
    ``scaled_label`` or ``scaled_either``); ``features`` name FeatureRow
    fields, with categoricals expanded to reference-coded dummies.
    """
    if response not in ("scaled_attach", "scaled_label", "scaled_either"):
        raise AnalysisError(f"unknown response {response!r}")
    X, names, docs = design_matrix(rows, features)
    y = np.array([row.value(response) for row in rows], dtype=float)
    return beta_fit_matrix(
        X,
        names,
        y,
        docs=docs if doc_effects else None,
        response=response,
        penalty=penalty,
        max_iter=max_iter,
        tol=tol,
    )


def lrt(full: BetaRegFit, reduced: BetaRegFit) -> TestResult:
    """Likelihood-ratio test of nested fits: 2*(ll_full - ll_reduced) on a
    chi-square with df = difference in fixed-effect parameters.  A small
    negative statistic (possible under the penalized approximation) is
    clamped to zero with a warning."""
    if full.response != reduced.response or full.n_obs != reduced.n_obs:
        raise AnalysisError("fits compare different responses or row sets")
    if not set(reduced.feature_names) <= set(full.feature_names):
        raise AnalysisError("models are not nested")
    df = full.n_fixed_params - reduced.n_fixed_params
    stat = 2.0 * (full.log_likelihood - reduced.log_likelihood)
    if stat < 0:
        _warnings.warn(
            f"negative likelihood-ratio statistic {stat:.3g} clamped to 0 "
            "(penalized fits are approximate)",
            stacklevel=2,
        )
        stat = 0.0
    p = float(special.chdtrc(float(df), stat)) if df > 0 else 1.0
    return TestResult(statistic=stat, effect_size=float("nan"), df=float(df), p_value=p, kind="lrt")


# ---------------------------------------------------------------------------
# distractor consistency


def load_dm_class_map(source: "Path | str") -> dict[str, frozenset[str]]:
    """Marker form -> set of relation classes, from a two-column TSV.
    ``source`` is a built-in name (``gum``, ``rstdt``) or a file path.
    Forms are casefolded; repeated forms accumulate classes."""
    name = str(source)
    if name in ("gum", "rstdt"):
        ref = importlib_resources.files("rstgauge.resources") / f"dm_classes_{name}.tsv"
        with importlib_resources.as_file(ref) as path:
            return load_dm_class_map(path)
    path = Path(source)
    out: dict[str, set[str]] = defaultdict(set)
    for lineno, raw in enumerate(path.read_text(encoding="utf8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise CorpusError(f"{path}:{lineno}: expected form<TAB>class")
        out[parts[0].casefold()].add(parts[1])
    return {form: frozenset(classes) for form, classes in out.items()}


@dataclass(frozen=True)
class ConsistencyCase:
    doc_id: str
    edu_id: int
    forms: tuple[str, ...]
    gold_class: str
    predicted_class: Optional[str]
    erroneous: bool
    covered: bool
    consistent: Optional[bool]  # None when not erroneous or not covered


@dataclass(frozen=True)
class ConsistencyReport:
    n_distractor_edus: int
    n_erroneous: int
    n_consistent: int
    n_inconsistent: int
    n_uncovered: int
    cases: tuple[ConsistencyCase, ...]

    @property
    def pct_erroneous(self) -> float:
        if self.n_distractor_edus == 0:
            return 0.0
        return 100.0 * self.n_erroneous / self.n_distractor_edus

    @property
    def pct_consistent(self) -> float:
        covered = self.n_consistent + self.n_inconsistent
        return 100.0 * self.n_consistent / covered if covered else 0.0


def distractor_consistency(
    corpus: Corpus,
    profiles: Iterable[ErrorProfile],
    majority: dict[tuple[str, int], str],
    dm_class_map: dict[str, frozenset[str]],
) -> ConsistencyReport:
    """For EDUs bearing a distractor: how many stay erroneous across runs,
    and whether the majority-predicted class matches a class the distractor
    form could signal.

    EDUs whose distractor forms are absent from the map are counted as
    uncovered and excluded from the consistency denominator.
    """
    hard = {(p.doc_id, p.edu_id): p.is_hard for p in profiles}

    by_edu: dict[tuple[str, int], list[str]] = defaultdict(list)
    for ann in corpus.annotations:
        if ann.is_signal or ann.doc_id not in corpus.trees:
            continue
        edu = annotation_edu(corpus.trees[ann.doc_id], ann)
        by_edu[(ann.doc_id, edu)].append(ann.form)

    cases: list[ConsistencyCase] = []
    n_err = n_cons = n_incons = n_uncov = 0
    for (doc_id, edu_id), forms in sorted(by_edu.items()):
        if (doc_id, edu_id) not in hard:
            raise CorpusError(f"no error profile for {doc_id} EDU {edu_id}")
        node = corpus.graphs[doc_id].node(edu_id)
        gold_class = node.rel_class
        if gold_class is None:
            gold_class = ROOT_LABEL if node.head == 0 else corpus.scheme.class_of(node.relation)
        erroneous = hard[(doc_id, edu_id)]
        predicted = majority.get((doc_id, edu_id))
        covered = False
        consistent: Optional[bool] = None
        if erroneous:
            n_err += 1
            allowed: set[str] = set()
            for form in forms:
                allowed.update(dm_class_map.get(form.casefold(), ()))
            covered = bool(allowed)
            if not covered:
                n_uncov += 1
            elif predicted is not None and predicted in allowed:
                consistent = True
                n_cons += 1
            else:
                consistent = False
                n_incons += 1
        cases.append(
            ConsistencyCase(
                doc_id=doc_id,
                edu_id=edu_id,
                forms=tuple(forms),
                gold_class=gold_class,
                predicted_class=predicted,
                erroneous=erroneous,
                covered=covered,
                consistent=consistent,
            )
        )
    return ConsistencyReport(
        n_distractor_edus=len(cases),
        n_erroneous=n_err,
        n_consistent=n_cons,
        n_inconsistent=n_incons,
        n_uncovered=n_uncov,
        cases=tuple(cases),
    )
