"""Why kernel smoothing is a poor spectral baseline.

Smoothing a Lanczos spectrum shifts every even-order moment by a positive
amount that grows with the bandwidth, and Dirac spectra of two graphs
from the same model are mutually singular, so their KL divergence is
infinite.
"""

from egspec.baselines import (dirac_divergence_pathology, exact_spectrum, lanczos_spectrum,
                              smoothed_moment_bias)
from egspec.generators import erdos_renyi
from egspec.graph import make_operator
from egspec.moments import ProbeConfig

op = make_operator(erdos_renyi(300, 0.05, seed=0))
spec = lanczos_spectrum(op, 40, ProbeConfig(d=20, seed=0))
print(f"Lanczos spectrum: {len(spec)} atoms")
for sigma in (1e-3, 1e-2, 5e-2, 1e-1):
    row = [smoothed_moment_bias(spec, "gaussian", sigma, m) / spec.moment(m) for m in (2, 4, 8, 16)]
    print(f"sigma={sigma:<6g} relative moment bias m=2,4,8,16: " + "  ".join(f"{b:.2e}" for b in row))

a = exact_spectrum(make_operator(erdos_renyi(100, 0.3, seed=1)))
b = exact_spectrum(make_operator(erdos_renyi(100, 0.3, seed=2)))
print("KL between exact spectra of two ER(100, 0.3) draws:", dirac_divergence_pathology(a, b))
print("KL of a spectrum with itself:", dirac_divergence_pathology(a, a))
