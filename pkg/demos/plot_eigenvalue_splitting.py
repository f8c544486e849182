"""
Breaking a double eigenvalue
============================

lambda = 1 on the unit disk is double.  Under the conformal direction
sigma = x^2 - y^2 (which is cos 2 theta on the circle) first-order
perturbation theory predicts slopes -1/4 and +1/4: the eigenvalues of the
cluster-projected pencil derivative.  We re-solve at a few step sizes and
compare.
"""

import numpy as np

from steklov_lab.fields import EuclideanMetric, PerturbationDirection, ScalarField
from steklov_lab.genericity import splitting_experiment
from steklov_lab.mesh import generate_disk_mesh
from steklov_lab.oracles import disk_split_slopes
from steklov_lab.reports import svg_plot, write_svg

sigma = ScalarField.polynomial({(2, 0): 1.0, (0, 2): -1.0})
h = PerturbationDirection.conformal(sigma)
mesh = generate_disk_mesh(1.0, 0.05)

rep = splitting_experiment(mesh, EuclideanMetric(), cluster=1, h=h,
                           steps=(4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3))
print("oracle slopes   :", disk_split_slopes(sigma, 1.0, 1))
print("discrete slopes :", rep.slopes)
print("gap / t         :", np.round(rep.gap_over_t(), 5))
print("residual orders :", np.round(rep.residual_orders(), 3))

###############################################################################
# Both branches against the straight lines the slopes predict.
t = np.array(rep.steps)
series = [{"x": t.tolist(), "y": rep.branches[:, k].tolist(), "label": f"branch {k}",
           "style": "points"} for k in range(2)]
series += [{"x": [0.0, t.max()], "y": [rep.base_eigenvalue, rep.base_eigenvalue + t.max() * s],
            "label": f"slope {s:+.3f}"} for s in rep.slopes]
write_svg("splitting.svg", svg_plot(series, "splitting of lambda = 1", "t", "eigenvalue"))
