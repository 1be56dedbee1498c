"""Numerical verification of the fusion oracle inequality.

Synthetic scenarios draw per-channel answer distributions from a family
where concentration (and hence entropy and log-loss at the truth) is an
explicit, monotone function of one latent draw. In calibrated mode both
channels aim at the true answer, so lower entropy implies lower loss by
construction; the anti-calibrated mode points the sharper channel at a
wrong answer. Monte Carlo estimates then check the pointwise geometric-
mixture bound, the oracle inequality and the gate regret term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import entropy_gate

_EPS_FLOOR = 1e-15
_PROB_CLIP = 1e-300


@dataclass(frozen=True)
class SyntheticScenario:
    answer_count: int = 4
    sharpness_breadth: float = 2.0
    sharpness_depth: float = 2.0
    calibrated: bool = True
    trials: int = 10_000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.answer_count < 2:
            raise ValueError("answer_count must be >= 2")
        if self.sharpness_breadth <= 0 or self.sharpness_depth <= 0:
            raise ValueError("sharpness parameters must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class RiskReport:
    risk_breadth: float
    risk_depth: float
    risk_fused: float
    risk_oracle: float
    gate_regret: float
    bound_violations: int


def _concentrated(n: int, target: int, epsilon: float) -> np.ndarray:
    probs = np.full(n, epsilon / n)
    probs[target] += 1.0 - epsilon
    return probs


def sample_channel_pair(
    scenario: SyntheticScenario, trial_index: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Reproducible (P_breadth, P_depth, truth) for one trial.

    Each channel mixes a point mass on its target with the uniform
    distribution; the mixing weight is u**sharpness for u ~ U(0, 1), so
    higher sharpness concentrates harder. In calibrated mode both targets
    are the truth; otherwise the sharper channel points at a wrong answer.
    """
    rng = np.random.default_rng((scenario.rng_seed, trial_index))
    n = scenario.answer_count
    truth = int(rng.integers(n))
    u_breadth = float(rng.random())
    u_depth = float(rng.random())
    eps_breadth = max(u_breadth ** scenario.sharpness_breadth, _EPS_FLOOR)
    eps_depth = max(u_depth ** scenario.sharpness_depth, _EPS_FLOOR)
    target_breadth = target_depth = truth
    if not scenario.calibrated:
        wrong = (truth + 1) % n
        if scenario.sharpness_depth >= scenario.sharpness_breadth:
            target_depth = wrong
        else:
            target_breadth = wrong
    p_breadth = _concentrated(n, target_breadth, eps_breadth)
    p_depth = _concentrated(n, target_depth, eps_depth)
    return p_breadth, p_depth, truth


def _entropy(probs: np.ndarray) -> float:
    positive = probs[probs > 0.0]
    return float(-(positive * np.log(positive)).sum()) + 0.0


def geometric_mixture(p_breadth: np.ndarray, p_depth: np.ndarray, alpha: float) -> np.ndarray:
    weights = np.clip(p_breadth, _PROB_CLIP, None) ** (1.0 - alpha) * np.clip(
        p_depth, _PROB_CLIP, None
    ) ** alpha
    return weights / weights.sum()


def check_pointwise_bound(
    p_breadth: np.ndarray, p_depth: np.ndarray, alpha: float, truth: int
) -> float:
    """Slack of the convex-combination bound on the fused log-loss.

    Returns [(1-alpha) * loss_B + alpha * loss_D] - loss_fused, which equals
    log(1/Z) for the mixture normalizer Z and must be >= 0 up to float error.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    loss_breadth = -float(np.log(max(p_breadth[truth], _PROB_CLIP)))
    loss_depth = -float(np.log(max(p_depth[truth], _PROB_CLIP)))
    fused = geometric_mixture(p_breadth, p_depth, alpha)
    loss_fused = -float(np.log(max(fused[truth], _PROB_CLIP)))
    return (1.0 - alpha) * loss_breadth + alpha * loss_depth - loss_fused


@dataclass(frozen=True)
class TrialData:
    """Per-trial Monte Carlo streams backing a RiskReport."""

    loss_breadth: np.ndarray
    loss_depth: np.ndarray
    loss_fused: np.ndarray
    cond_min: np.ndarray
    regret_terms: np.ndarray
    entropy_breadth: np.ndarray
    entropy_depth: np.ndarray
    bound_slacks: np.ndarray

    def standard_error(self, values: np.ndarray) -> float:
        if len(values) < 2:
            return 0.0
        return float(values.std(ddof=1) / np.sqrt(len(values)))


def run_trials(scenario: SyntheticScenario) -> TrialData:
    count = scenario.trials
    loss_breadth = np.empty(count)
    loss_depth = np.empty(count)
    loss_fused = np.empty(count)
    cond_min = np.empty(count)
    regret_terms = np.empty(count)
    entropy_breadth = np.empty(count)
    entropy_depth = np.empty(count)
    bound_slacks = np.empty(count)
    for index in range(count):
        p_breadth, p_depth, truth = sample_channel_pair(scenario, index)
        h_breadth = _entropy(p_breadth)
        h_depth = _entropy(p_depth)
        alpha = entropy_gate(h_breadth, h_depth)
        fused = geometric_mixture(p_breadth, p_depth, alpha)
        lb = -float(np.log(p_breadth[truth]))
        ld = -float(np.log(p_depth[truth]))
        lf = -float(np.log(fused[truth]))
        # scenario construction makes the conditional expected losses equal
        # the realized ones, so the oracle gate is computable per trial
        delta = ld - lb
        alpha_star = 1.0 if delta < 0.0 else 0.0
        loss_breadth[index] = lb
        loss_depth[index] = ld
        loss_fused[index] = lf
        cond_min[index] = min(lb, ld)
        regret_terms[index] = abs(delta) * abs(alpha - alpha_star)
        entropy_breadth[index] = h_breadth
        entropy_depth[index] = h_depth
        bound_slacks[index] = check_pointwise_bound(p_breadth, p_depth, alpha, truth)
    return TrialData(
        loss_breadth=loss_breadth,
        loss_depth=loss_depth,
        loss_fused=loss_fused,
        cond_min=cond_min,
        regret_terms=regret_terms,
        entropy_breadth=entropy_breadth,
        entropy_depth=entropy_depth,
        bound_slacks=bound_slacks,
    )


def estimate_risks(scenario: SyntheticScenario, data: TrialData | None = None) -> RiskReport:
    """Monte Carlo risk estimates plus the oracle-inequality self-check."""
    data = data or run_trials(scenario)
    report = RiskReport(
        risk_breadth=float(data.loss_breadth.mean()),
        risk_depth=float(data.loss_depth.mean()),
        risk_fused=float(data.loss_fused.mean()),
        risk_oracle=float(data.cond_min.mean()),
        gate_regret=float(data.regret_terms.mean()),
        bound_violations=int((data.bound_slacks < -1e-9).sum()),
    )
    assert report.risk_oracle <= min(report.risk_breadth, report.risk_depth) + 1e-9
    assert report.risk_fused <= report.risk_oracle + report.gate_regret + 1e-9
    return report


def random_fusion_triple(
    seed: int, index: int, max_answers: int = 8
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Seeded random (P_breadth, P_depth, alpha, truth) on a varying simplex."""
    rng = np.random.default_rng((seed, index))
    n = 2 + index % (max_answers - 1)
    p_breadth = rng.dirichlet(np.ones(n))
    p_depth = rng.dirichlet(np.ones(n))
    alpha = float(rng.random())
    truth = int(rng.integers(n))
    return p_breadth, p_depth, alpha, truth


def risk_table(rows: list[tuple[SyntheticScenario, RiskReport]]) -> str:
    """Delimited table of scenario parameters and risks, one row per scenario."""
    header = (
        "answer_count\tsharpness_breadth\tsharpness_depth\tcalibrated\ttrials\trng_seed\t"
        "risk_breadth\trisk_depth\trisk_fused\trisk_oracle\tgate_regret\tbound_violations"
    )
    lines = [header]
    for scenario, report in rows:
        lines.append(
            "\t".join(
                [
                    str(scenario.answer_count),
                    repr(scenario.sharpness_breadth),
                    repr(scenario.sharpness_depth),
                    str(scenario.calibrated).lower(),
                    str(scenario.trials),
                    str(scenario.rng_seed),
                    repr(report.risk_breadth),
                    repr(report.risk_depth),
                    repr(report.risk_fused),
                    repr(report.risk_oracle),
                    repr(report.gate_regret),
                    str(report.bound_violations),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def format_report(scenario: SyntheticScenario, report: RiskReport) -> str:
    lines = [
        f"scenario: answers={scenario.answer_count} "
        f"sharpness=({scenario.sharpness_breadth}, {scenario.sharpness_depth}) "
        f"calibrated={scenario.calibrated} trials={scenario.trials} seed={scenario.rng_seed}",
        f"risk_breadth  = {report.risk_breadth:.6f}",
        f"risk_depth    = {report.risk_depth:.6f}",
        f"risk_fused    = {report.risk_fused:.6f}",
        f"risk_oracle   = {report.risk_oracle:.6f}",
        f"gate_regret   = {report.gate_regret:.6f}",
        f"bound_violations = {report.bound_violations}",
    ]
    return "\n".join(lines) + "\n"
