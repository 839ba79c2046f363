"""Exciton ZPL spectrum of defects near a cubic inclusion in GaN.

Calibrates the band parameters so the two interface-defect lines land on
1100 and 1350 nm, then sweeps the defect position across the inclusion and
prints the resulting wavelength distribution.

Run:  python3 demos/demo_zpl_spectrum.py
"""

from emitterlab.exciton import (
    ExcitonParams,
    StackProfile,
    calibrate,
    interface_bilayers,
    zpl_distribution,
)


def main():
    stack = StackProfile.from_string("hhhccchhh")
    params = calibrate(stack, ExcitonParams())
    print("calibrated parameters:")
    print(f"  de_cbm = {params.de_cbm:.4f} eV, e0 = {params.e0:.4f} eV")
    print(f"  interface bilayers: {interface_bilayers(stack)}")

    spec = zpl_distribution(stack, range(-8, 9), params)
    print("\ndefect position sweep (bilayer index -> ZPL nm, binding meV):")
    for i, lam, b in zip(spec.defect_indices, spec.zpl_nm, spec.binding_ev):
        bar = "#" * int((lam - 900.0) / 20.0)
        print(f"  {i:+3d}  {lam:8.1f} nm  {1000 * b:7.1f} meV  {bar}")

    print("\n10 nm histogram:")
    for lo, hi, n in zip(spec.hist_edges_nm[:-1], spec.hist_edges_nm[1:],
                         spec.hist_counts):
        if n:
            print(f"  [{lo:6.0f}, {hi:6.0f}) nm : {'*' * int(n)}")


if __name__ == "__main__":
    main()
