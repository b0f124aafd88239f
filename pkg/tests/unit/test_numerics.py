"""Tests for the numeric building blocks."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np
import numpy.typing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from event_dynamics.core.exceptions import (
    DomainError,
    NonFiniteGradient,
    NonFiniteIntegrand,
    NonFiniteVectorField,
    ShapeError,
    ToleranceNotMet,
)
from event_dynamics.core.parallel import ordered_map
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.ode import (
    ode_solve_scalar,
    rk4_integrate,
    rk4_quadrature_rule,
)
from event_dynamics.numerics.optim import (
    AdamState,
    PlateauScheduler,
    adam_step,
    clip_by_global_norm,
)
from event_dynamics.numerics.quadrature import quad_adaptive
from event_dynamics.numerics.rng import Rng

Array = npt.NDArray[np.float64]


class TestRng:
    """Tests for Rng."""

    def test_same_seed_same_draws(self) -> None:
        """Identical seed and stream give identical draws."""
        a = Rng(42).split(1, 2).uniform(size=5)
        b = Rng(42).split(1, 2).uniform(size=5)

        np.testing.assert_array_equal(a, b)

    def test_split_streams_differ(self) -> None:
        """Sibling streams are not copies of each other."""
        root = Rng(42)

        assert not np.array_equal(
            root.split(0).normal(size=5), root.split(1).normal(size=5)
        )

    def test_split_does_not_consume_parent(self) -> None:
        """Splitting leaves the parent's own draws unchanged."""
        a = Rng(3)
        b = Rng(3)
        a.split(9).uniform(size=10)

        assert a.uniform() == b.uniform()

    def test_exponential_uses_rate(self) -> None:
        """Exponential draws have mean close to one over the rate."""
        draws = Rng(0).exponential(4.0, size=20_000)

        assert draws.mean() == pytest.approx(0.25, rel=0.05)

    def test_invalid_seed(self) -> None:
        """Negative seeds are rejected."""
        with pytest.raises(ValueError):
            Rng(-1)

    def test_repr(self) -> None:
        """Repr names seed and stream."""
        assert repr(Rng(5).split(1)) == "Rng(seed=5, stream=(1,))"


class TestOrderedMap:
    """Tests for ordered_map."""

    def test_order_and_worker_independence(self) -> None:
        """Results keep input order for any worker count."""

        def draw(i: int) -> float:
            return float(Rng(11).split(i).uniform())

        serial = ordered_map(draw, range(20), workers=1)
        threaded = ordered_map(draw, range(20), workers=4)

        assert serial == threaded


class TestQuadrature:
    """Tests for quad_adaptive."""

    def test_polynomial(self) -> None:
        """Low-degree polynomials integrate exactly."""
        assert quad_adaptive(lambda x: x * x, 0.0, 1.0, 1e-12) == pytest.approx(
            1.0 / 3.0, abs=1e-12
        )

    def test_sine(self) -> None:
        """Integral of sin over [0, pi] is 2."""
        assert quad_adaptive(math.sin, 0.0, math.pi, 1e-12) == pytest.approx(
            2.0, abs=1e-10
        )

    def test_vectorized_matches_scalar(self) -> None:
        """Vectorized evaluation gives the same estimate."""
        scalar = quad_adaptive(lambda x: math.exp(-x), 0.0, 5.0, 1e-10)
        vector = quad_adaptive(np.exp, -5.0, 0.0, 1e-10, vectorized=True)

        assert scalar == pytest.approx(vector, abs=1e-10)

    def test_endpoint_singularity(self) -> None:
        """An integrable endpoint singularity converges by subdivision."""
        value = quad_adaptive(lambda x: 1.0 / math.sqrt(x), 0.0, 1.0, 1e-6)

        assert value == pytest.approx(2.0, abs=1e-4)

    def test_empty_interval(self) -> None:
        """Zero-width interval integrates to zero."""
        assert quad_adaptive(lambda x: x, 2.0, 2.0, 1e-8) == 0.0

    def test_non_finite_integrand(self) -> None:
        """NaN values raise NonFiniteIntegrand."""
        with pytest.raises(NonFiniteIntegrand):
            quad_adaptive(lambda x: math.nan, 0.0, 1.0, 1e-8)

    def test_tolerance_not_met(self) -> None:
        """Exhausting the interval cap raises ToleranceNotMet."""
        with pytest.raises(ToleranceNotMet):
            quad_adaptive(math.sqrt, 0.0, 1.0, 1e-15, max_intervals=1)

    def test_invalid_arguments(self) -> None:
        """Non-positive tolerance and reversed limits are rejected."""
        with pytest.raises(ValueError):
            quad_adaptive(math.sin, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            quad_adaptive(math.sin, 1.0, 0.0, 1e-8)


class TestOde:
    """Tests for the RK4 integrators."""

    def test_exponential_growth(self) -> None:
        """y' = y from y(0) = 1 reaches e at t = 1."""
        y = rk4_integrate(lambda t, y: y, 1.0, 0.0, 1.0, 100)

        assert y == pytest.approx(math.e, abs=1e-9)

    def test_scalar_solve_is_antiderivative(self) -> None:
        """G' = 2m from zero gives m1^2 - m0^2."""
        assert ode_solve_scalar(lambda m: 2.0 * m, 0.5, 1.5, 10) == pytest.approx(
            2.0, abs=1e-12
        )

    def test_quadrature_rule_matches_rk4(self) -> None:
        """The Simpson weights reproduce RK4 for a state-free field."""
        nodes, weights = rk4_quadrature_rule(-1.0, -0.1, 32)
        rule = float(np.sum(weights * np.cos(3.0 * nodes)))
        stepped = ode_solve_scalar(lambda m: math.cos(3.0 * m), -1.0, -0.1, 32)

        assert rule == pytest.approx(stepped, abs=1e-12)
        assert nodes[0] == -1.0
        assert nodes[-1] == -0.1

    def test_non_finite_field(self) -> None:
        """A NaN stage raises NonFiniteVectorField."""
        with pytest.raises(NonFiniteVectorField):
            rk4_integrate(lambda t, y: math.nan, 0.0, 0.0, 1.0, 4)

    def test_invalid_steps(self) -> None:
        """At least one step is required."""
        with pytest.raises(ValueError):
            rk4_integrate(lambda t, y: 0.0, 0.0, 0.0, 1.0, 0)


def _numeric_grad(
    f: Callable[[npt.NDArray[np.float64]], float],
    x: npt.NDArray[np.float64],
    h: float = 1e-6,
) -> npt.NDArray[np.float64]:
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up = x.copy()
        down = x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


_OTHER = np.array([[0.7, -1.3, 2.1], [0.4, 1.5, -0.6]])
_ROWS = np.array([[2, 0], [1, 1]], dtype=np.int64)
_CLIP_BANDS = np.array([[-1.5, -0.6], [-0.4, 0.4], [0.6, 1.5]])


def _real(r: Rng) -> Array:
    return r.normal(size=(2, 3))


def _positive(r: Rng) -> Array:
    return r.uniform(0.2, 2.0, size=(2, 3))


def _open_unit(r: Rng) -> Array:
    return r.uniform(-0.8, 0.8, size=(2, 3))


def _nonzero(r: Rng) -> Array:
    sign = np.where(r.uniform(size=(2, 3)) < 0.5, -1.0, 1.0)
    return sign * r.uniform(0.3, 2.0, size=(2, 3))


def _off_clip_bounds(r: Rng) -> Array:
    band = _CLIP_BANDS[r.integers(0, 3, size=(2, 3))]
    return band[..., 0] + (band[..., 1] - band[..., 0]) * r.uniform(size=(2, 3))


Sampler = Callable[[Rng], Array]
Primitive = Callable[[ad.Tensor], ad.Tensor]

# name -> (input sampler, primitive applied to a (2, 3) input)
_PRIMITIVES: dict[str, tuple[Sampler, Primitive]] = {
    "add": (_real, lambda x: ad.add(x, _OTHER)),
    "add_broadcast": (_real, lambda x: ad.add(_OTHER, ad.sum_(x, axis=0))),
    "sub": (_real, lambda x: ad.sub(_OTHER, x)),
    "mul": (_real, lambda x: ad.mul(x, x)),
    "div": (_nonzero, lambda x: ad.div(_OTHER, x)),
    "div_numerator": (_real, lambda x: ad.div(x, _OTHER)),
    "neg": (_real, ad.neg),
    "square": (_real, ad.square),
    "power": (_positive, lambda x: ad.power(x, 2.5)),
    "sqrt": (_positive, ad.sqrt),
    "abs": (_nonzero, ad.abs_),
    "exp": (_real, ad.exp),
    "log": (_positive, ad.log),
    "sin": (_real, ad.sin),
    "tanh": (_real, ad.tanh),
    "atanh": (_open_unit, ad.atanh),
    "sigmoid": (_real, ad.sigmoid),
    "softplus": (_real, ad.softplus),
    "normal_cdf": (_real, ad.normal_cdf),
    "clip": (_off_clip_bounds, lambda x: ad.clip(x, -0.5, 0.5)),
    "sum": (_real, lambda x: ad.sum_(x, axis=1)),
    "mean": (_real, lambda x: ad.mean(x, axis=0)),
    "softmax": (_real, lambda x: ad.softmax(x, axis=-1)),
    "logsumexp": (_real, lambda x: ad.logsumexp(x, axis=-1, keepdims=False)),
    "matmul_left": (_real, lambda x: ad.matmul(x, _OTHER.T)),
    "matmul_right": (_real, lambda x: ad.matmul(_OTHER.T, x)),
    "matvec": (_real, lambda x: ad.matmul(x, _OTHER[0])),
    "transpose": (_real, ad.transpose),
    "reshape": (_real, lambda x: ad.reshape(x, (3, 2))),
    "concat": (_real, lambda x: ad.concat([x, ad.square(x)], axis=0)),
    "getitem": (_real, lambda x: ad.getitem(x, (slice(None), slice(1, 3)))),
    "gather": (_real, lambda x: ad.gather(x, _ROWS)),
}


class TestAutodiff:
    """Tests for the reverse-mode tape."""

    @staticmethod
    def _loss(w: ad.Tensor, x: ad.Tensor) -> ad.Tensor:
        hidden = ad.tanh(ad.matmul(w, x))
        return ad.add(
            ad.sum_(ad.square(hidden)),
            ad.logsumexp(ad.mul(x, 2.0), axis=-1, keepdims=False),
        )

    def test_gradient_matches_finite_differences(self) -> None:
        """Tape gradients agree with central differences."""
        r = Rng(0)
        w0 = r.normal(size=(3, 4))
        x0 = r.normal(size=4)

        tape = ad.Tape()
        w = tape.parameter("w", w0)
        x = tape.parameter("x", x0)
        grads = ad.tape_grad(self._loss(w, x), tape)  # type: ignore[arg-type]

        np.testing.assert_allclose(
            grads["w"],
            _numeric_grad(lambda v: float(self._loss(v, x0)), w0),
            atol=1e-6,
        )
        np.testing.assert_allclose(
            grads["x"],
            _numeric_grad(lambda v: float(self._loss(w0, v)), x0),
            atol=1e-6,
        )

    @pytest.mark.parametrize("name", sorted(_PRIMITIVES))
    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_primitive_gradients(self, name: str, seed: int) -> None:
        """Each primitive's vector-Jacobian product matches central differences."""
        sampler, op = _PRIMITIVES[name]
        x0 = sampler(Rng(seed))
        weights = Rng(seed).split(1).normal(size=np.shape(ad.value_of(op(x0))))

        def loss(x: ad.Tensor) -> ad.Tensor:
            return ad.sum_(ad.mul(op(x), weights))

        tape = ad.Tape()
        total = loss(tape.parameter("x", x0))
        grads = ad.tape_grad(total, tape)  # type: ignore[arg-type]

        np.testing.assert_allclose(
            grads["x"],
            _numeric_grad(lambda v: float(loss(v)), x0),
            rtol=1e-5,
            atol=1e-6,
        )

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_two_layer_composite_gradients(self, seed: int) -> None:
        """A random two-layer network has relative gradient error below 1e-4."""
        r = Rng(seed)
        w1, w2, x = r.normal(size=(4, 3)), r.normal(size=(2, 4)), r.normal(size=3)

        def loss(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
            hidden = ad.tanh(ad.matmul(a, x))
            return ad.logsumexp(ad.matmul(b, hidden), axis=-1, keepdims=False)

        tape = ad.Tape()
        total = loss(tape.parameter("w1", w1), tape.parameter("w2", w2))
        grads = ad.tape_grad(total, tape)  # type: ignore[arg-type]

        np.testing.assert_allclose(
            grads["w1"],
            _numeric_grad(lambda v: float(loss(v, w2)), w1),
            rtol=1e-4,
            atol=1e-7,
        )
        np.testing.assert_allclose(
            grads["w2"],
            _numeric_grad(lambda v: float(loss(w1, v)), w2),
            rtol=1e-4,
            atol=1e-7,
        )

    def test_plain_arrays_stay_arrays(self) -> None:
        """Without nodes the primitives return numpy values."""
        out = ad.exp(np.array([0.0, 1.0]))

        assert isinstance(out, np.ndarray)
        np.testing.assert_allclose(out, [1.0, math.e])

    def test_array_left_operand_defers_to_node(self) -> None:
        """ndarray <op> Node records on the tape."""
        tape = ad.Tape()
        x = tape.parameter("x", np.array([1.0, 2.0]))
        y = np.array([3.0, 4.0]) * x

        assert ad.is_node(y)
        grads = ad.tape_grad(ad.sum_(y), tape)  # type: ignore[arg-type]
        np.testing.assert_allclose(grads["x"], [3.0, 4.0])

    def test_softmax_and_gather_gradients(self) -> None:
        """Normalizer and gather gradients agree with finite differences."""
        a0 = Rng(1).normal(size=(2, 3))
        idx = np.array([[2, 0], [1, 1]], dtype=np.int64)
        weights = np.array([[1.0, -2.0], [0.5, 3.0]])

        def f(a: ad.Tensor) -> ad.Tensor:
            return ad.sum_(ad.mul(ad.gather(ad.softmax(a, axis=-1), idx), weights))

        tape = ad.Tape()
        grads = ad.tape_grad(f(tape.parameter("a", a0)), tape)  # type: ignore[arg-type]

        np.testing.assert_allclose(
            grads["a"], _numeric_grad(lambda v: float(f(v)), a0), atol=1e-6
        )

    def test_unused_parameter_has_zero_gradient(self) -> None:
        """Leaves outside the loss get zeros."""
        tape = ad.Tape()
        x = tape.parameter("x", 2.0)
        tape.parameter("unused", np.ones(3))
        grads = ad.tape_grad(ad.square(x), tape)  # type: ignore[arg-type]

        assert float(grads["x"]) == pytest.approx(4.0)
        np.testing.assert_array_equal(grads["unused"], np.zeros(3))

    def test_domain_errors(self) -> None:
        """Out-of-domain inputs raise DomainError."""
        with pytest.raises(DomainError):
            ad.log(np.array([-1.0]))
        with pytest.raises(DomainError):
            ad.div(1.0, np.array([0.0]))
        with pytest.raises(DomainError):
            ad.atanh(np.array([1.0]))

    def test_shape_errors(self) -> None:
        """Incompatible shapes and non-scalar losses raise ShapeError."""
        with pytest.raises(ShapeError):
            ad.add(np.ones(3), np.ones(4))
        with pytest.raises(ShapeError):
            ad.matmul(np.ones((2, 3)), np.ones(2))
        tape = ad.Tape()
        x = tape.parameter("x", np.ones(2))
        with pytest.raises(ShapeError):
            ad.tape_grad(x, tape)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
    def test_softplus_derivative_is_sigmoid(self, v: float) -> None:
        """d softplus / dx equals the logistic function."""
        tape = ad.Tape()
        x = tape.parameter("x", v)
        grads = ad.tape_grad(ad.softplus(x), tape)  # type: ignore[arg-type]

        assert float(grads["x"]) == pytest.approx(1.0 / (1.0 + math.exp(-v)))


class TestOptim:
    """Tests for Adam and the plateau scheduler."""

    def test_clip_by_global_norm(self) -> None:
        """Gradients above the norm are rescaled onto it."""
        clipped, norm = clip_by_global_norm({"a": np.array([3.0, 4.0])}, 1.0)

        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(clipped["a"], [0.6, 0.8])

    def test_clip_leaves_small_gradients(self) -> None:
        """Gradients within the norm pass through unchanged."""
        grads = {"a": np.array([0.1, 0.1])}
        clipped, _ = clip_by_global_norm(grads, 1.0)

        np.testing.assert_array_equal(clipped["a"], grads["a"])

    def test_first_step_moves_by_learning_rate(self) -> None:
        """Bias correction makes the first update about lr * sign(g)."""
        params = {"w": np.array([1.0, -1.0])}
        state = AdamState.for_params(params, learning_rate=0.01, weight_decay=0.0)
        new, state = adam_step(params, {"w": np.array([0.5, -0.2])}, state, 10.0)

        np.testing.assert_allclose(new["w"], [0.99, -0.99], atol=1e-6)
        assert state.step == 1

    def test_weight_decay_enters_adam_moments(self) -> None:
        """With zero gradients the L2 term alone drives a full first step."""
        params = {"w": np.array([2.0, -2.0])}
        state = AdamState.for_params(params, learning_rate=0.1, weight_decay=1e-4)
        new, _ = adam_step(params, {"w": np.zeros(2)}, state, 10.0)

        np.testing.assert_allclose(new["w"], [1.9, -1.9], atol=1e-4)

    def test_non_finite_gradient(self) -> None:
        """NaN gradients raise NonFiniteGradient naming the parameter."""
        params = {"w": np.zeros(2)}
        state = AdamState.for_params(params)
        with pytest.raises(NonFiniteGradient) as exc:
            adam_step(params, {"w": np.array([np.nan, 0.0])}, state, 1.0)

        assert exc.value.parameter == "w"

    def test_missing_gradient(self) -> None:
        """A missing gradient raises ShapeError."""
        params = {"w": np.zeros(2)}
        with pytest.raises(ShapeError):
            adam_step(params, {}, AdamState.for_params(params), 1.0)

    def test_plateau_scheduler(self) -> None:
        """The rate halves after patience epochs without improvement."""
        scheduler = PlateauScheduler(patience=2, factor=0.5)

        assert scheduler.step(1.0, 1.0) == 1.0
        assert scheduler.step(0.5, 1.0) == 1.0
        assert scheduler.step(0.5, 1.0) == 0.5
        assert scheduler.step(2.0, 0.5) == 0.5
