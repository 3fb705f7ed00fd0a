"""Regenerate the triangular Delta-adapted fixture meshes shipped in hessdisc/data.

Level L holds the Delaunay triangulation of the offset-row point set with
n = 4 * 2**L rows (h = 1.118 / n).  Every file is validated before it is written.
"""
import argparse
import os

from hessdisc.mesh import gen_delaunay_triangular_mesh, save_mesh, validate_delta_adapted

DATA = os.path.join(os.path.dirname(__file__), os.pardir, "src", "hessdisc", "data")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--out", default=DATA)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for level in range(args.levels):
        n = 4 * 2 ** level
        mesh = gen_delaunay_triangular_mesh(n)
        report = validate_delta_adapted(mesh)
        if not report:
            raise SystemExit(report.summary())
        path = os.path.join(args.out, f"tri_delta_{level}.msh")
        save_mesh(mesh, path)
        print(f"{path}: {mesh.n_cells} cells, h = {mesh.h:.6f}")


if __name__ == "__main__":
    main()
