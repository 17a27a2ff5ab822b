import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from src.app.models.automaton_model import GateLayout
from src.app.services.automaton_service import AutomatonService
from src.app.services.basis_service import DomainError, SiteIndexError
from src.app.services.fitting_service import InsufficientStatisticsError


def as_string(bits):
    return "".join(str(int(b)) for b in bits)


@pytest.mark.parametrize("before, after", [("1001", "1010"), ("1100", "1100"), ("1011", "1011"), ("0001", "0001")])
def test_gate_u1(before, after):
    assert as_string(AutomatonService.gate_u1(before, 1)) == after


@pytest.mark.parametrize("before, after", [("110", "101"), ("010", "010"), ("111", "111"), ("101", "110")])
def test_gate_u2(before, after):
    assert as_string(AutomatonService.gate_u2(before, 1)) == after


def test_gate_bounds():
    with pytest.raises(SiteIndexError):
        AutomatonService.gate_u1("10010", 3)
    with pytest.raises(SiteIndexError):
        AutomatonService.gate_u2("101", 2)


def test_gate_positions():
    kind, js = AutomatonService.gate_positions(1, 12, GateLayout.PAIRED)
    assert kind == "U2"
    assert js.tolist() == [1, 4, 7, 10]
    assert AutomatonService.gate_positions(2, 12, GateLayout.PAIRED)[1].tolist() == [2, 6]
    assert AutomatonService.gate_positions(7, 12, GateLayout.PAIRED)[0] == "U2"
    assert AutomatonService.gate_positions(3, 12, GateLayout.STAGGERED)[1].tolist() == [1, 4, 7, 10]


@pytest.mark.parametrize(
    "k, kind, sites",
    [
        (0, "U1", [1, 5, 9]),
        (1, "U2", [1, 4, 7, 10]),
        (2, "U1", [2, 6]),
        (3, "U2", [2, 5, 8]),
        (4, "U1", [3, 7]),
        (5, "U2", [3, 6, 9]),
        (6, "U1", [4, 8]),
        (7, "U1", [1, 5, 9]),
        (8, "U2", [1, 4, 7, 10]),
    ],
)
def test_cell_layout_shifts_every_layer(k, kind, sites):
    got_kind, js = AutomatonService.gate_positions(k, 12, GateLayout.CELL)
    assert got_kind == kind
    assert js.tolist() == sites


def test_cell_layout_period_is_seven():
    for k in range(30):
        first = AutomatonService.gate_positions(k, 40, GateLayout.CELL)
        again = AutomatonService.gate_positions(k + 7, 40, GateLayout.CELL)
        assert first[0] == again[0]
        np.testing.assert_array_equal(first[1], again[1])


def test_small_domain_wall_run(automaton_service):
    run = automaton_service.run_automaton(4, 2, 2)
    assert [as_string(row) for row in run.bitmap] == ["1100", "1100", "1010"]
    assert run.displacement.tolist() == [0.0, 0.0, 1.0]
    assert run.particle_front.tolist() == [2, 2, 3]
    assert run.hole_front.tolist() == [3, 3, 2]


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=4, max_size=40), st.integers(min_value=0, max_value=60))
def test_layers_are_reversible(bits, layers):
    for layout in GateLayout:
        service = AutomatonService(layout)
        state = service.initial_state(len(bits), 0, bits)
        forward = state
        for _ in range(layers):
            forward = service.step_layer(forward)
        back = service.run_reverse(forward)
        assert back.layer == 0
        np.testing.assert_array_equal(back.bits, state.bits)


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=4, max_size=40))
def test_particle_number_is_conserved(bits):
    run = AutomatonService().run_automaton(len(bits), 0, 30, bits=bits)
    assert run.Np == sum(bits)
    assert np.all(run.bitmap.sum(axis=1) == sum(bits))


def test_unstep_at_layer_zero(automaton_service):
    with pytest.raises(DomainError):
        automaton_service.unstep_layer(automaton_service.initial_state(8, 3))
    with pytest.raises(DomainError):
        automaton_service.initial_state(8, 3, bits="101")


def test_fronts():
    particle, hole = AutomatonService.fronts(np.array([[1, 1, 0, 0], [1, 1, 1, 1], [0, 0, 0, 0]]))
    assert particle.tolist() == [2, 4, 0]
    assert hole.tolist() == [3, 0, 1]


def test_locate_crossover(automaton_service):
    times = np.arange(0.0, 10001.0)
    R = np.where(times <= 1000, times, 1000.0 + 50.0 * np.log(np.maximum(times, 1.0) / 1000.0))
    crossover = automaton_service.locate_crossover(times, R, np.arange(10001))
    assert abs(crossover.time - 1000.0) <= 5.0
    assert crossover.front == crossover.index
    assert crossover.linear_r_squared == pytest.approx(1.0, abs=1e-3)
    assert crossover.log_r_squared == pytest.approx(1.0, abs=1e-3)
    assert crossover.velocity == pytest.approx(1.0, abs=1e-2)
    assert crossover.log_slope == pytest.approx(50.0, rel=0.05)
    with pytest.raises(InsufficientStatisticsError):
        automaton_service.locate_crossover(times[:10], R[:10], np.arange(10))


def test_crossover_needs_a_slowdown(automaton_service):
    times = np.arange(0.0, 2001.0)
    with pytest.raises(InsufficientStatisticsError):
        automaton_service.locate_crossover(times, 0.5 * times, np.arange(2001))


def test_domain_wall_crossover_at_full_size(automaton_service):
    run = automaton_service.run_automaton(298, 100, 100_000)
    crossover = automaton_service.locate_crossover(run.times, run.displacement, run.particle_front)
    assert crossover.linear_r_squared > 0.99
    assert crossover.log_r_squared > 0.95
    assert abs(crossover.front - 180) <= 20
    assert 500 <= crossover.time <= 1000
    assert crossover.log_slope > 0
    velocities = automaton_service.front_velocities(run, crossover.index)
    assert velocities.particle > 0


def test_domain_wall_spreads(automaton_service):
    run = automaton_service.run_automaton(60, 20, 400)
    assert run.displacement[-1] > 0
    assert run.particle_front.max() > 20
    velocities = automaton_service.front_velocities(run, 20)
    assert velocities.particle > 0


def test_bitmap_encoding(automaton_service):
    run = automaton_service.run_automaton(37, 12, 150)
    data = automaton_service.encode_bitmap(run.bitmap)
    assert data[:4] == b"EAB1"
    np.testing.assert_array_equal(automaton_service.decode_bitmap(data), run.bitmap)
    with pytest.raises(ValueError):
        automaton_service.decode_bitmap(b"NOPE" + data[4:])


def test_row_starting_with_particle_has_empty_zero_run():
    data = AutomatonService.encode_bitmap(np.array([[1, 1, 0]], dtype=np.uint8))
    assert data[12:] == bytes([3, 0, 2, 1])


def test_to_image(automaton_service):
    image = automaton_service.to_image(np.array([[1, 0, 1], [0, 1, 1]], dtype=np.uint8))
    assert image.size == (3, 2)
    assert image.getpixel((0, 0)) == 0
    assert image.getpixel((1, 0)) == 255
