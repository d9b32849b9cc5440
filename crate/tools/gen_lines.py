"""Regenerate the bundled decay-chain line catalog.

Line data come from the decay_2012 line library distributed with the
`actigamma` package. A line is kept when its energy is at least 50 keV and it
is emitted in at least 0.01% of the decays of its own isotope. Intensities in
the output are per decay of the chain-segment parent, i.e. multiplied by the
branching fraction that feeds the isotope.
"""
import json
import os
import sys

import actigamma

DATA = os.path.join(os.path.dirname(actigamma.__file__), "data", "lines_decay_2012.min.json")
OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data", "lines", "catalog.csv")

SEGMENTS = [
    ("K40", [("K40", 1.0)]),
    ("U-pre", [("U238", 1.0), ("Th234", 1.0), ("Pa234m", 1.0), ("Pa234", 0.0016), ("U234", 1.0),
               ("Th230", 1.0), ("Ra226", 1.0)]),
    ("U-post", [("Rn222", 1.0), ("Po218", 1.0), ("At218", 0.0002), ("Pb214", 0.9998), ("Bi214", 1.0),
                ("Tl210", 0.00021), ("Po214", 0.99979), ("Pb210", 1.0), ("Bi210", 1.0), ("Po210", 1.0),
                ("Hg206", 1.9e-6), ("Tl206", 1.9e-6)]),
    ("Th-a", [("Th232", 1.0), ("Ra228", 1.0), ("Ac228", 1.0), ("Th228", 1.0), ("Ra224", 1.0)]),
    ("Th-b", [("Rn220", 1.0), ("Po216", 1.0), ("Pb212", 1.0), ("Bi212", 1.0), ("Tl208", 0.3594),
              ("Po212", 0.6406)]),
]

E_MIN_EV = 50e3
MIN_OWN_INTENSITY = 1e-4


def main():
    db = json.load(open(DATA))
    rows = []
    for seg, isotopes in SEGMENTS:
        for iso, branch in isotopes:
            for kind in ("gamma", "x-ray"):
                block = db[iso].get(kind)
                if not block:
                    continue
                lines = block["lines"]
                for e, i, n in zip(lines["energies"], lines["intensities"], lines["norms"]):
                    own = i * n
                    if e >= E_MIN_EV and own >= MIN_OWN_INTENSITY:
                        rows.append((seg, iso, kind, e / 1e3, own * branch))
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w") as f:
        f.write("# source: decay_2012 line library; E >= 50 keV, own intensity >= 1e-4\n")
        f.write("segment,isotope,E_keV,intensity_per_decay\n")
        for seg, iso, kind, e, p in rows:
            tag = iso if kind == "gamma" else iso + ":x"
            f.write(f"{seg},{tag},{e:.4f},{p:.6e}\n")
    counts = {}
    for seg, _, kind, _, _ in rows:
        counts[(seg, kind)] = counts.get((seg, kind), 0) + 1
    for k in sorted(counts):
        print(k, counts[k], file=sys.stderr)


if __name__ == "__main__":
    main()
