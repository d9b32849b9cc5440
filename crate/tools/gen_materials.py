"""Regenerate the bundled photon interaction tables.

Photoelectric and incoherent cross sections come from the Elam tables shipped
with xraydb (valid to 1 MeV / 800 keV). Above that range the photoelectric
term is extended as a log-log power law, incoherent scattering follows
Klein-Nishina, and pair production uses the Bethe-Heitler parameterization
used by common transport codes.
"""
import math
import os
import numpy as np
import xraydb

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data", "materials")
NA = 6.02214076e23
RE = 2.8179403262e-13  # cm
ME = 510.99895  # keV

MATERIALS = {
    "concrete": (2.30, {"H": 0.010, "C": 0.001, "O": 0.529107, "Na": 0.016, "Mg": 0.002,
                        "Al": 0.033872, "Si": 0.337021, "K": 0.013, "Ca": 0.044, "Fe": 0.014}),
    "silicon": (2.33, {"Si": 1.0}),
    "aluminum": (2.70, {"Al": 1.0}),
    "sapphire": (3.98, {"Al": 0.529251, "O": 0.470749}),
    "nai": (3.67, {"Na": 0.153373, "I": 0.846627}),
    "copper": (8.96, {"Cu": 1.0}),
    "iron": (7.87, {"Fe": 1.0}),
    "lead": (11.35, {"Pb": 1.0}),
    "water": (1.00, {"H": 0.111894, "O": 0.888106}),
}

A_PAIR = [8.7842e2, -1.9625e3, 1.2949e3, -2.0028e2, 1.2575e1, -2.8333e-1]
B_PAIR = [-1.0342e1, 1.7692e1, -8.2381, 1.3063, -9.0815e-2, 2.3586e-3]
C_PAIR = [-4.5263e2, 1.1161e3, -8.6749e2, 2.1773e2, -2.0467e1, 6.5372e-1]


def pair_per_atom_cm2(z, e_kev):
    if e_kev <= 2 * ME:
        return 0.0
    e = max(e_kev, 1500.0)
    x = math.log(e / ME)
    poly = lambda c: sum(ci * x ** i for i, ci in enumerate(c))
    sigma = (z + 1.0) * (poly(A_PAIR) * z + poly(B_PAIR) * z * z + poly(C_PAIR)) * 1e-30
    if e_kev < 1500.0:
        t = (e_kev - 2 * ME) / (1500.0 - 2 * ME)
        sigma *= t * t
    return max(sigma, 0.0)


def klein_nishina_per_electron_cm2(e_kev):
    k = e_kev / ME
    a = 1 + 2 * k
    return 2 * math.pi * RE ** 2 * (
        (1 + k) / k ** 2 * (2 * (1 + k) / a - math.log(a) / k)
        + math.log(a) / (2 * k)
        - (1 + 3 * k) / a ** 2
    )


def photo_cm2_g(sym, e_ev):
    if e_ev <= 0.8e6:
        return float(xraydb.mu_elam(sym, e_ev, "photo"))
    # local log-log slope relaxes from its 600-800 keV value toward -1
    e1, e2 = 0.6e6, 0.8e6
    p1, p2 = float(xraydb.mu_elam(sym, e1, "photo")), float(xraydb.mu_elam(sym, e2, "photo"))
    s0 = math.log(p2 / p1) / math.log(e2 / e1)
    q = 0.7
    x = e_ev / e2
    return p2 * math.exp(-math.log(x) + (s0 + 1.0) * (1.0 - x ** -q) / q)


def incoh_cm2_g(sym, e_ev):
    if e_ev <= 0.8e6:
        return float(xraydb.mu_elam(sym, e_ev, "incoh"))
    z = xraydb.atomic_number(sym)
    a = xraydb.atomic_mass(sym)
    return klein_nishina_per_electron_cm2(e_ev / 1e3) * z * NA / a


def grid(fracs):
    base = list(np.logspace(math.log10(5.0), math.log10(1.0e8), 8 * 10 + 1))
    edges = []
    for sym in fracs:
        for name, edge in xraydb.xray_edges(sym).items():
            ek = edge.energy / 1e3
            if 5.0 < ek < 1000.0:
                edges.append(ek)
    pts = sorted(set(round(e, 6) for e in base))
    out = []
    for e in pts:
        out.append((e, 0))
    for ek in edges:
        out.append((ek * (1 - 1e-6), -1))
        out.append((ek, 1))
    out.sort()
    return out, edges


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, (rho, fracs) in MATERIALS.items():
        points, edges = grid(fracs)
        rows = []
        for e_kev, side in points:
            e_ev = e_kev * 1e3
            ph = co = pa = 0.0
            for sym, w in fracs.items():
                # evaluate just below/above an edge so the jump lands on the grid
                e_eval = e_ev * (1 - 1e-7) if side < 0 else e_ev * (1 + 1e-7) if side > 0 else e_ev
                ph += w * photo_cm2_g(sym, e_eval)
                co += w * incoh_cm2_g(sym, e_ev)
                z = xraydb.atomic_number(sym)
                pa += w * pair_per_atom_cm2(z, e_kev) * NA / xraydb.atomic_mass(sym)
            rows.append((e_kev, ph, co, pa))
        with open(os.path.join(OUT, f"{name}.csv"), "w") as f:
            f.write(f"# density_g_cm3={rho}\n")
            f.write("E_keV,photoelectric_cm2_g,compton_cm2_g,pair_cm2_g\n")
            for r in rows:
                f.write(f"{r[0]:.10g},{r[1]:.6e},{r[2]:.6e},{r[3]:.6e}\n")
        with open(os.path.join(OUT, f"{name}.composition.csv"), "w") as f:
            f.write("Z,A,frac\n")
            for sym, w in fracs.items():
                f.write(f"{xraydb.atomic_number(sym)},{xraydb.atomic_mass(sym):.5f},{w}\n")


if __name__ == "__main__":
    main()
