"""MD payload: lattice construction, integration, tensile runs, stress."""

import math

import numpy as np
import pytest

from gridsweep.errors import BlowUpError, ParameterError
from gridsweep.md import (
    A0_DEFAULT,
    Crystal,
    MDParams,
    build_crystal,
    compute_forces,
    equilibrate,
    fcc_positions,
    grip_separation,
    grip_stress,
    integrate,
    integrate_step,
    kinetic_energy,
    run_tensile,
    total_energy,
    total_momentum,
)


def two_atom_crystal(separation, box_side=30.0):
    pos = np.array([[10.0, 10.0, 10.0],
                    [10.0 + separation, 10.0, 10.0]])
    return Crystal(positions=pos, velocities=np.zeros((2, 3)),
                   box=np.array([box_side] * 3), periodic=(True, True, True),
                   lattice_constant=A0_DEFAULT,
                   grip_mask=np.zeros(2, dtype=bool))


# --- construction --------------------------------------------------------


def test_fcc_cell_has_four_atoms():
    crystal = build_crystal(2, 2, 2, grip_planes=0)
    assert crystal.n_atoms == 32
    assert fcc_positions(3, 4, 5).shape == (4 * 3 * 4 * 5, 3)


def test_zero_temperature_means_zero_velocities():
    crystal = build_crystal(3, 4, 3, temperature=0.0)
    assert np.all(crystal.velocities == 0)


def test_momentum_is_zeroed_at_build():
    crystal = build_crystal(4, 4, 4, temperature=0.1, seed=3, grip_planes=0)
    assert np.linalg.norm(total_momentum(crystal)) < 1e-12


def test_build_rejects_small_or_overgripped():
    with pytest.raises(ParameterError):
        build_crystal(1, 4, 4)
    with pytest.raises(ParameterError):
        build_crystal(2, 2, 2, grip_planes=2)  # grips would cover everything


def test_grip_layers_marked_and_velocity_free():
    crystal = build_crystal(3, 4, 3, temperature=0.1, seed=1)
    # 3 planes of the 8 (010) planes per end
    assert crystal.grip_mask.sum() == 3 * crystal.n_atoms // 4
    assert np.all(crystal.velocities[crystal.grip_mask] == 0)


# --- integration ---------------------------------------------------------


def test_gripped_lattice_is_an_equilibrium():
    crystal = build_crystal(4, 4, 4, temperature=0.0)
    before = crystal.positions.copy()
    integrate(crystal, MDParams(), 100)
    delta = crystal.positions - before
    for axis in (0, 2):  # fold out whole-box wraps along the periodic axes
        delta[:, axis] -= crystal.box[axis] * np.round(delta[:, axis] / crystal.box[axis])
    assert np.abs(delta).max() < 1e-8


def test_pair_oscillation_period_matches_fine_dt_reference():
    r_eq = 2 ** (1 / 6)

    def period(dt, n_steps):
        params = MDParams(dt=dt, temperature=0.0)
        crystal = two_atom_crystal(r_eq + 0.05)
        times, seps = [], []
        for step in range(n_steps):
            integrate(crystal, params, 1)
            times.append((step + 1) * dt)
            seps.append(np.linalg.norm(crystal.positions[1] - crystal.positions[0]))
        seps = np.asarray(seps) - np.mean(seps)
        crossings = []
        for k in range(1, len(seps)):
            if seps[k - 1] < 0 <= seps[k]:  # upward crossing, interpolated
                frac = -seps[k - 1] / (seps[k] - seps[k - 1])
                crossings.append(times[k - 1] + frac * dt)
        assert len(crossings) >= 3
        return (crossings[-1] - crossings[0]) / (len(crossings) - 1)

    coarse = period(0.004, 1000)
    fine = period(0.00004, 100_000)
    assert abs(coarse - fine) / fine < 1e-3


def test_nve_energy_and_momentum_conservation():
    params = MDParams(dt=0.005)
    crystal = build_crystal(4, 4, 4, temperature=0.05, seed=0, grip_planes=0)
    e0 = total_energy(crystal, params)
    integrate(crystal, params, 1000)
    e1 = total_energy(crystal, params)
    assert abs((e1 - e0) / e0) < 1e-4
    assert np.linalg.norm(total_momentum(crystal)) < 1e-10


def test_integrate_step_leaves_input_untouched():
    params = MDParams()
    crystal = build_crystal(2, 4, 2, temperature=0.05, seed=5)
    snapshot = crystal.positions.copy()
    out = integrate_step(crystal, params)
    assert np.array_equal(crystal.positions, snapshot)
    assert not np.array_equal(out.positions, snapshot)


def test_close_pair_blows_up():
    crystal = two_atom_crystal(0.3)
    with pytest.raises(BlowUpError):
        compute_forces(crystal, MDParams())


def test_params_validation():
    with pytest.raises(ParameterError):
        MDParams(dt=0.0)
    with pytest.raises(ParameterError):
        MDParams(target_strain=1.5)
    with pytest.raises(ParameterError):
        MDParams(cutoff=0.5)


# --- stress --------------------------------------------------------------


def stretched(crystal, strain):
    out = crystal.copy()
    y = out.positions[:, 1]
    center = y.mean()
    out.positions[:, 1] = center + (1.0 + strain) * (y - center)
    return out


def fd_stress_oracle(crystal, params, delta=1e-5):
    """Central difference of potential energy under a rigid top-grip shift."""
    y = crystal.positions[:, 1]
    top = crystal.grip_mask & (y > y[crystal.grip_mask].mean())
    energies = []
    for sign in (+1.0, -1.0):
        probe = crystal.copy()
        probe.positions[top, 1] += sign * delta
        _, pe, _ = compute_forces(probe, params)
        energies.append(pe)
    dU_dh = (energies[0] - energies[1]) / (2 * delta)
    area = float(crystal.box[0] * crystal.box[2])
    return dU_dh / area


def test_unstrained_stress_vanishes():
    crystal = build_crystal(4, 6, 4, temperature=0.0)
    assert abs(grip_stress(crystal, MDParams())) < 1e-6


@pytest.mark.parametrize("strain,sign", [(0.02, 1), (-0.02, -1)])
def test_stress_sign_and_energy_derivative(strain, sign):
    params = MDParams()
    crystal = stretched(build_crystal(4, 6, 4, temperature=0.0), strain)
    sigma = grip_stress(crystal, params)
    assert sign * sigma > 0
    assert sigma == pytest.approx(fd_stress_oracle(crystal, params), rel=1e-4)


# --- tensile runs --------------------------------------------------------


FAST = MDParams(strain_rate=0.2, target_strain=0.20, temperature=0.0,
                equilibration_steps=20)


def test_zero_target_gives_single_perfect_record():
    params = MDParams(target_strain=0.0, temperature=0.0, equilibration_steps=10)
    records = run_tensile(params, (2, 4, 2))
    assert len(records) == 1
    assert records[0].strain == 0.0
    assert records[0].c_hcp == 0.0 and records[0].c_unk == 0.0
    assert records[0].c_fcc == 1.0


def test_checkpoint_grid_arithmetic():
    records = run_tensile(FAST, (2, 4, 2))
    strains = [r.strain for r in records]
    assert strains == pytest.approx([0.01 * k for k in range(21)])
    assert all(b.strain > a.strain for a, b in zip(records, records[1:]))


def test_checkpoint_grid_survives_doubling_nx():
    small = run_tensile(FAST, (2, 4, 2))
    wide = run_tensile(FAST, (4, 4, 2))
    assert [r.strain for r in small] == [r.strain for r in wide]
    assert small[0].c_unk == 0.0 and wide[0].c_unk == 0.0


def test_tensile_run_is_deterministic():
    params = MDParams(strain_rate=0.2, target_strain=0.05, temperature=0.05,
                      equilibration_steps=50, seed=9)
    a = run_tensile(params, (2, 4, 2))
    b = run_tensile(params, (2, 4, 2))
    assert a == b


def test_strain_tracks_grip_separation():
    crystal = build_crystal(2, 4, 2, temperature=0.0)
    l0 = grip_separation(crystal)
    params = MDParams(temperature=0.0)
    v_grip = 0.5 * 0.2 * crystal.lattice_constant
    integrate(crystal, params, 100, grip_speed=v_grip)
    expect = l0 + 2 * v_grip * 100 * params.dt
    assert grip_separation(crystal) == pytest.approx(expect, rel=1e-12)


def test_defects_nucleate_at_twenty_percent_strain():
    params = MDParams(strain_rate=0.1, target_strain=0.20, seed=1)
    records = run_tensile(params, (4, 6, 4))
    assert records[-1].c_unk > 0
