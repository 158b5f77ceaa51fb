"""Model parameters, natural-frequency laws and the Maxwellian equilibrium."""
from dataclasses import dataclass, field
import math

import numpy as np

TWO_PI = 2.0 * np.pi


class ModelError(ValueError):
    """Invalid model parameters or frequency law."""


class DegenerateDiffusionError(ModelError):
    """Raised when a construction needs sigma > 0 (the Maxwellian does)."""


@dataclass(frozen=True)
class ModelParams:
    """Inertia m, coupling kappa, noise sigma (all finite; m > 0, kappa, sigma >= 0)."""

    m: float = 1.0
    kappa: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        for name in ("m", "kappa", "sigma"):
            val = getattr(self, name)
            if not isinstance(val, (int, float, np.floating, np.integer)) or not math.isfinite(val):
                raise ModelError(f"{name} must be a finite number, got {val!r}")
            object.__setattr__(self, name, float(val))
        if self.m <= 0.0:
            raise ModelError(f"m must be positive, got {self.m}")
        if self.kappa < 0.0:
            raise ModelError(f"kappa must be non-negative, got {self.kappa}")
        if self.sigma < 0.0:
            raise ModelError(f"sigma must be non-negative, got {self.sigma}")

    def require_diffusion(self):
        if self.sigma <= 0.0:
            raise DegenerateDiffusionError(
                "degenerate diffusion: sigma = 0 has no Maxwellian equilibrium")

    @property
    def thermal_speed(self):
        """sqrt(sigma / m), the standard deviation of the equilibrium in omega."""
        return math.sqrt(self.sigma / self.m)


@dataclass(frozen=True)
class FrequencyDistribution:
    """Discrete natural-frequency law: nodes nu_k with weights w_k summing to 1.

    A continuous law is represented by its quadrature rule, so every integral
    over nu in the toolkit is a weighted sum over the nodes.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "discrete"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise ModelError("nodes and weights must be non-empty 1-d arrays of equal length")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise ModelError("nodes and weights must be finite")
        if np.any(weights <= 0.0):
            raise ModelError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ModelError(f"weights must sum to 1 (got {weights.sum()!r})")
        if np.unique(nodes).size != nodes.size:
            raise ModelError("nodes must be distinct")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, nu0=0.0):
        return cls(np.array([float(nu0)]), np.array([1.0]), kind="dirac")

    @classmethod
    def discrete(cls, nodes, weights):
        return cls(np.asarray(nodes, float), np.asarray(weights, float), kind="discrete")

    @classmethod
    def gaussian(cls, mean=0.0, std=1.0, n_nodes=8):
        """Gauss-Hermite rule for N(mean, std^2); exact for polynomials of degree < 2n."""
        if std <= 0.0:
            raise ModelError("gaussian std must be positive")
        if n_nodes < 1:
            raise ModelError("need at least one quadrature node")
        x, w = np.polynomial.hermite_e.hermegauss(int(n_nodes))
        w = w / w.sum()
        # renormalise once more so the sum is 1 to the last bit where possible
        w = w / math.fsum(w)
        return cls(mean + std * x, w, kind="gaussian",
                   info={"mean": float(mean), "std": float(std), "n_nodes": int(n_nodes)})

    @property
    def size(self):
        return self.nodes.size

    @property
    def mean(self):
        """nu-bar, the mean natural frequency."""
        return float(np.dot(self.weights, self.nodes))

    @property
    def second_moment(self):
        """Integral of nu^2 dg."""
        return float(np.dot(self.weights, self.nodes ** 2))

    @property
    def nu_norm_sq(self):
        """||g||_nu^2 = sum (1 + nu_k^2) w_k."""
        return float(np.dot(self.weights, 1.0 + self.nodes ** 2))

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.nodes)))

    def weight_at(self, nu, tol=1e-12):
        """Weight of the node at nu (0 when nu is not a node)."""
        hit = np.abs(self.nodes - nu) <= tol * max(1.0, abs(nu))
        return float(self.weights[hit].sum())

    def to_dict(self):
        return {"kind": self.kind, "nodes": self.nodes.tolist(), "weights": self.weights.tolist()}


def maxwellian_profile(params, omega, nu, weight=1.0):
    """(1/2pi) sqrt(m/(2 pi sigma)) exp(-m (omega-nu)^2 / (2 sigma)) * weight."""
    params.require_diffusion()
    m, s = params.m, params.sigma
    omega = np.asarray(omega, dtype=float)
    return (weight / TWO_PI) * math.sqrt(m / (TWO_PI * s)) * np.exp(-(m / (2.0 * s)) * (omega - nu) ** 2)


def maxwellian(params, g, omega, nu):
    """Equilibrium density M(omega; nu), carrying the g-weight of the node nu.

    Theta-independent. Its integral over omega and nu is 1/(2 pi).
    """
    return maxwellian_profile(params, omega, nu, g.weight_at(nu))


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def gaussian_moment(params, ell):
    """Integral of (omega-nu)^(2 ell) M d(omega) d(nu) = (2ell-1)!! / (2pi) (sigma/m)^ell."""
    if int(ell) != ell or not 0 <= ell <= 4:
        raise ModelError(f"gaussian_moment supports integer 0 <= ell <= 4, got {ell!r}")
    params.require_diffusion()
    ell = int(ell)
    return _double_factorial(2 * ell - 1) / TWO_PI * (params.sigma / params.m) ** ell


@dataclass(frozen=True)
class NoiseConditionReport:
    """Margin of sigma against the sufficient noise condition for decay.

    The condition reads sigma >= C max{m kappa^2, kappa, 1/m, m ||g||_nu^2}
    with a constant C that is not quantified, so the report carries the
    ratio sigma / max{...} and the individual terms instead of a verdict.
    """

    sigma: float
    terms: dict
    threshold: float
    ratio: float

    def to_dict(self):
        return {"sigma": self.sigma, "terms": dict(self.terms),
                "threshold": self.threshold, "ratio": self.ratio}


def noise_condition_margin(params, g):
    terms = {
        "m kappa^2": params.m * params.kappa ** 2,
        "kappa": params.kappa,
        "1/m": 1.0 / params.m,
        "m |g|_nu^2": params.m * g.nu_norm_sq,
    }
    threshold = max(terms.values())
    return NoiseConditionReport(params.sigma, terms, threshold, params.sigma / threshold)


class MaxwellianCache:
    """Per-grid arrays of the equilibrium and the two Hermite-like modes.

    All arrays have shape (n_nu, n_omega) and are constant in theta:
    M (weight folded in), sqrt(M), chi0 = sqrt(2pi) sqrt(M),
    chi1 = sqrt(2 pi m / sigma) (omega - nu) sqrt(M), and the weights of the
    mu-norm, alpha = 1 + (m/sigma)(omega - nu)^2 and beta = sigma/m.
    """

    def __init__(self, params, g, omega):
        params.require_diffusion()
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (g.size, omega.shape[-1]):
            raise ModelError("omega must have shape (n_nu, n_omega)")
        self.params = params
        self.g = g
        self.omega = omega
        self.xi = omega - g.nodes[:, None]  # omega - nu
        self.M = np.stack([maxwellian_profile(params, omega[k], g.nodes[k], g.weights[k])
                           for k in range(g.size)])
        self.sqrt_M = np.sqrt(self.M)
        self.chi0 = math.sqrt(TWO_PI) * self.sqrt_M
        self.chi1 = math.sqrt(TWO_PI * params.m / params.sigma) * self.xi * self.sqrt_M
        self.alpha = 1.0 + (params.m / params.sigma) * self.xi ** 2
        self.beta = params.sigma / params.m
