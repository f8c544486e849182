"""
Annulus: checking the oracle against itself and the mesh
========================================================

Separation of variables on 0.5 < r < 1 gives, per angular mode k, a 2x2
matching system.  The oracle finds its roots by bracketing a determinant, and
the closed-form quadratic is used only as a cross-check.
"""

import numpy as np

from steklov_lab.mesh import generate_annulus_mesh
from steklov_lab.oracles import mode_roots, annulus_quadratic_roots, annulus_spectrum
from steklov_lab.steklov import build_dtn, steklov_eigs

for k in range(1, 4):
    print(k, np.round(mode_roots(k, 0.5, 1.0, 4000), 10), np.round(annulus_quadratic_roots(k, 0.5, 1.0), 10))
print("k = 0 root vs 3 / ln 2:", mode_roots(0, 0.5, 1.0, 4000)[0], 3 / np.log(2))

exact = annulus_spectrum(0.5, 1.0, 8)
for h in (0.2, 0.1, 0.05):
    lam = steklov_eigs(build_dtn(generate_annulus_mesh(0.5, 1.0, h)), 8).eigenvalues
    print(f"h={h:<5} max rel error {np.max(np.abs(lam[1:] - exact[1:]) / exact[1:]):.2e}")
