import numpy as np
import pytest

from inertial_kuramoto import snapshots
from inertial_kuramoto.diagnostics import COLUMNS, DiagnosticsSeries


def test_kinetic_round_trip(tmp_path, rng):
    F = rng.random((2, 8, 32))
    path = tmp_path / "s.kski"
    snapshots.write_kinetic(path, F, [-1.0, 1.0], [0.3, 0.7], 2.0, 0.5, 1.5, 0.25)
    head, nu, w, G = snapshots.read_kinetic(path)
    assert np.array_equal(F, G)
    assert list(nu) == [-1.0, 1.0] and list(w) == [0.3, 0.7]
    assert head["m"] == 2.0 and head["t"] == 0.25 and head["n_theta"] == 8


def test_kinetic_rejects_corruption(tmp_path, rng):
    path = tmp_path / "s.kski"
    snapshots.write_kinetic(path, rng.random((1, 8, 32)), [0.0], [1.0], 1, 1, 1, 0)
    raw = path.read_bytes()
    (tmp_path / "short.kski").write_bytes(raw[:-8])
    (tmp_path / "magic.kski").write_bytes(b"XXXX" + raw[4:])
    for name in ("short.kski", "magic.kski"):
        with pytest.raises(snapshots.SnapshotError):
            snapshots.read_kinetic(tmp_path / name)


def test_particle_round_trip(tmp_path, rng):
    th, om, nu = rng.random((3, 100))
    path = tmp_path / "p.kspa"
    snapshots.write_particles(path, th, om, nu, 3.5)
    head, a, b, c = snapshots.read_particles(path)
    assert head["n"] == 100 and head["t"] == 3.5
    assert np.array_equal(a, th) and np.array_equal(b, om) and np.array_equal(c, nu)
    with pytest.raises(snapshots.SnapshotError):
        snapshots.read_kinetic(path)


def test_diagnostics_csv_round_trip(tmp_path):
    s = DiagnosticsSeries()
    s.append(t=0.0, mass=1.0, M1=0.1 + 0.2)
    s.append(t=0.1, mass=1.0, M1=0.25)
    path = tmp_path / "d.csv"
    s.write(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == list(COLUMNS)
    back = DiagnosticsSeries.read(path)
    assert back.column("M1") == [0.1 + 0.2, 0.25]
    assert back.rows[0]["r"] is None
