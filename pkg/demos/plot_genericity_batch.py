"""
How generic is generic?
=======================

Random conformal factors exp(sigma) applied to the round disk should break
every multiplicity.  They should also leave boundary traces with
transversal zeros and nondegenerate critical points.  Sampling is only a proxy
for "residual set", but it is a cheap and honest one.
"""

from steklov_lab.fields import EuclideanMetric
from steklov_lab.genericity import (fixture_trace, morse_scan, nodal_regularity_scan,
                                    run_trial, simplicity_scan)
from steklov_lab.mesh import generate_disk_mesh

mesh = generate_disk_mesh(1.0, 0.1)

###############################################################################
# The unperturbed disk: five double eigenvalues among the first ten.
base = run_trial(mesh, EuclideanMetric(), None, m=10)
print("round disk clusters:", [b - a for a, b in base.clusters[1:6]])

###############################################################################
# Twenty perturbed metrics.  Threads do not change the result, only the clock.
stats = simplicity_scan(mesh, trials=20, m=10, amplitude=0.1, modes=3, threads=4)
print(f"fraction with all of the first 10 simple: {stats.fraction_simple:.2f}")
print("smallest relative gap:", min(t.min_gap for t in stats.trials))
print("flagged trials:", len(stats.failing()))

###############################################################################
# Sanity: the scans do flag what they should.
print("sin^2 zeros flagged:", nodal_regularity_scan([fixture_trace("sin-squared")]).flag_count)
print("sin^3 criticals flagged:", morse_scan([fixture_trace("cubic-flat")]).flag_count)
