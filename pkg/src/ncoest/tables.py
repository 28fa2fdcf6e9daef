"""Default simulation parameter tables (site x age x behavior design).

Rows are indexed by site (0, 1, 2) or behavior level (low, medium, high);
columns follow the age grid 15, 15.5, ..., 21. Values keep their three-decimal rounding,
so some rows sum to 0.995-1.002; they are renormalized when loaded.
"""

AGE_GRID = [15 + 0.5 * k for k in range(13)]

W_AGE_GIVEN_SITE = [
    [0.076, 0.076, 0.081, 0.076, 0.076, 0.081, 0.081, 0.076, 0.076, 0.076, 0.081, 0.070, 0.076],
    [0.077, 0.083, 0.077, 0.077, 0.077, 0.077, 0.071, 0.077, 0.077, 0.077, 0.071, 0.077, 0.077],
    [0.082, 0.076, 0.076, 0.076, 0.076, 0.076, 0.076, 0.082, 0.076, 0.076, 0.076, 0.076, 0.076],
]

# P(A = level | site, age), one table per level.
A_HIGH = [
    [0.088, 0.120, 0.106, 0.072, 0.161, 0.193, 0.228, 0.224, 0.273, 0.248, 0.221, 0.252, 0.233],
    [0.092, 0.085, 0.137, 0.169, 0.212, 0.253, 0.189, 0.252, 0.296, 0.252, 0.270, 0.319, 0.266],
    [0.121, 0.141, 0.211, 0.216, 0.214, 0.208, 0.226, 0.268, 0.243, 0.220, 0.294, 0.275, 0.340],
]
A_MEDIUM = [
    [0.292, 0.312, 0.300, 0.476, 0.394, 0.415, 0.439, 0.390, 0.489, 0.440, 0.527, 0.612, 0.533],
    [0.342, 0.368, 0.325, 0.381, 0.388, 0.372, 0.528, 0.452, 0.456, 0.458, 0.535, 0.507, 0.601],
    [0.260, 0.226, 0.264, 0.319, 0.406, 0.397, 0.467, 0.428, 0.451, 0.453, 0.479, 0.495, 0.471],
]
A_LOW = [
    [0.621, 0.569, 0.594, 0.452, 0.445, 0.392, 0.333, 0.386, 0.238, 0.312, 0.251, 0.136, 0.234],
    [0.567, 0.547, 0.538, 0.450, 0.400, 0.375, 0.283, 0.296, 0.248, 0.291, 0.196, 0.174, 0.133],
    [0.619, 0.633, 0.525, 0.465, 0.380, 0.395, 0.307, 0.303, 0.305, 0.327, 0.227, 0.230, 0.189],
]

# P(A_tilde = level | age, A, T = 1); rows are A = low, medium, high.
A_TILDE_HIGH = [
    [0.018, 0.019, 0.019, 0.019, 0.019, 0.019, 0.019, 0.020, 0.020, 0.020, 0.020, 0.020, 0.021],
    [0.091, 0.092, 0.093, 0.094, 0.094, 0.095, 0.096, 0.097, 0.098, 0.099, 0.100, 0.101, 0.102],
    [0.990] * 13,
]
A_TILDE_MEDIUM = [
    [0.073, 0.074, 0.075, 0.076, 0.076, 0.077, 0.078, 0.078, 0.079, 0.080, 0.081, 0.082, 0.082],
    [0.900, 0.899, 0.898, 0.897, 0.896, 0.895, 0.894, 0.893, 0.892, 0.891, 0.890, 0.889, 0.888],
    [0.010] * 13,
]
A_TILDE_LOW = [
    [0.908, 0.907, 0.906, 0.906, 0.905, 0.904, 0.903, 0.902, 0.901, 0.900, 0.899, 0.898, 0.897],
    [0.009, 0.009, 0.009, 0.009, 0.009, 0.010, 0.010, 0.010, 0.010, 0.010, 0.010, 0.010, 0.010],
    [0.000] * 13,
]

TREATMENT = {"alpha_t": -0.91, "delta_t": -1 / 18, "gamma_t": 1.5, "zeta_t": 1.0}

Y1 = {"beta1": -0.73, "lambda1": 0.01, "mu_site": [0.06, -0.26, 0.50]}

# (P(Y2_j = 1), lambda2_j, mu2_j) for the 20 nontargeted strains.
Y2_STRAINS = [
    (0.07, 0.0035, -0.2504),
    (0.03, 0.0026, -0.1048),
    (0.0145, 0.0071, -0.0994),
    (0.055, 0.0156, -0.3612),
    (0.075, 0.0004, -0.1164),
    (0.04, 0.0090, -0.2218),
    (0.02, 0.0073, -0.2030),
    (0.055, 0.0078, -0.0325),
    (0.065, 0.0054, 0.1126),
    (0.075, 0.0015, 0.3296),
    (0.09, 0.0082, -0.1547),
    (0.03, 0.0036, 0.3212),
    (0.095, 0.0085, -0.2316),
    (0.02, 0.0052, 0.1313),
    (0.09, 0.0077, 0.5098),
    (0.07, 0.0120, -0.0070),
    (0.04, 0.0112, -0.1339),
    (0.07, 0.0143, -0.0015),
    (0.085, 0.0011, 0.3554),
    (0.06, 0.0019, -0.2277),
]

# Scenario grid of the observational and unblinded-trial tables.
PREVALENCES = (0.14, 0.05, 0.025)
A_LEVEL_SETS = ((0.0, 1.0, 2.5), (0.0, 1.0, 2.0), (0.0, 0.75, 1.5))
