"""Fit a Zipf-Mandelbrot law to pooled degree data.

Run:  python demos/zipf_mandelbrot_fit.py
"""

from telecorr.distributions import (
    bin_degrees,
    fit_zipf_mandelbrot,
    probability_views,
    sample_zipf_mandelbrot,
    zm_binned,
)

for alpha, delta in [(2.0, 1.0), (1.5, 4.0), (2.5, 0.0)]:
    degrees = sample_zipf_mandelbrot(alpha, delta, support_max=1 << 20, n=500_000, seed=7)
    binned = bin_degrees(degrees)
    fit = fit_zipf_mandelbrot(binned)
    print(f"truth alpha={alpha:.2f} delta={delta:<5} -> fit alpha={fit.alpha:.2f} "
          f"delta={fit.delta:<5} residual={fit.residual:.4f} (d_max={fit.support_max})")

# Side by side for the last fit: measured D against the pooled model.
D = probability_views(binned).D
model = zm_binned(fit.alpha, fit.delta, fit.support_max)
print("\n   d_i    measured      model")
for i, (a, b) in enumerate(zip(D, model)):
    if a > 0:
        print(f"{1 << i:>6d}  {a:10.3e}  {b:10.3e}")
