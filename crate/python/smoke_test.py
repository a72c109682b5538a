"""Smoke test for the `uwsr` Python extension.

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import uwsr


def main():
    points, normals = uwsr.sample_shape("sphere", 400, seed=0)
    assert len(points) == 400 and len(normals) == 400

    config = uwsr.PipelineConfig(depth=2, grid_depth=5)
    rec = uwsr.reconstruct(points, normals, config)
    assert rec.pgp90 is not None and rec.pgp90 > 0.9, rec.pgp90
    for n in rec.normals:
        assert abs(math.sqrt(sum(c * c for c in n)) - 1.0) < 1e-9

    vertices, triangles = rec.mesh
    assert len(triangles) > 0
    inside, outside = rec.evaluate([[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
    assert inside > rec.v_iso > outside

    report = json.loads(rec.report_json())
    assert report["schema"] == uwsr.REPORT_SCHEMA == 1

    samples = uwsr.sample_mesh(vertices, triangles, 5000, seed=1)
    cd = uwsr.normalized_chamfer(samples, points)
    assert 0.0 <= cd < 1e-2, cd

    flat, flat_normals = uwsr.sample_shape("circle", 100)
    rec2 = uwsr.reconstruct(flat, flat_normals, uwsr.PipelineConfig(mode="2d", depth=2))
    assert rec2.mesh is None and len(rec2.contours) >= 1

    noisy = uwsr.perturb(points, 0.01, seed=3)
    assert noisy != points and uwsr.perturb(points, 0.01, seed=3) == noisy

    with tempfile.TemporaryDirectory() as d:
        written = rec.write(d, "sphere")
        assert len(written) == 3 and all(os.path.exists(p) for p in written)
        loaded, loaded_normals = uwsr.load_points(written[0])
        assert len(loaded) == 400 and loaded_normals is not None

    try:
        uwsr.PipelineConfig(nh="lots")
    except ValueError:
        pass
    else:
        raise AssertionError("bad nh accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
