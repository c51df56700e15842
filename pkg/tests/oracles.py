"""Reference values computed independently with mpmath at 40 digits and frozen here.

``test_oracles.py`` recomputes each one so a typo cannot slip in silently.
"""

import math

# E x(1) for x0=1, b=0.5, beta=-1: 0.5 + 0.5/e
MEAN_CIR_T1 = 0.6839397205857211607977618850807304337229

# (E x0 + 0 + 2 + K) exp(K - beta) with E x0=1, K=1, beta=-1
G1_K1 = 29.55622439572260090892170984230003125272

# cir_jump acceptance model: E x0=1, int b = 0.5, K = 0.25 + 1 = 1.25, beta=-1
G1_ACCEPT = 45.06674522270299717261425296143075751291
H1_ACCEPT = 106.150176751081743638382069163219204404

LOG_1E12 = 27.63102111592854820821589745621237049121

# exp(-k(k+1)/2), k = 1..6
A_SQRT = [
    0.3678794411714423215955237701614608674458,
    0.0497870683678639429793424156500617766317,
    0.002478752176666358423045167430816667891506,
    0.00004539992976248485153559151556055061023792,
    0.0000003059023205018257883714794977022896393708,
    0.000000000758256042791190672794174324126812644298,
]

# explicit Euler with h=1/2 on dx=-x dt from 1 gives 1/4 at T=1; exact is 1/e
EULER_HALF_ERROR = 0.1178794411714423215955237701614608674458

# shared acceptance parameters
CIR_PARAMS = dict(sigma0=0.5, beta=-1.0, drift=0.5, x0=1.0)
CIR_JUMP_PARAMS = dict(CIR_PARAMS, rate=2.0, mark_law={"exponential": {"mean": 0.5}}, cap=1.0)
LEVY_PARAMS = dict(sigma0=0.3, beta=-1.0, drift=0.5, x0=1.0, rate=2.0, mark_law={"exponential": {"mean": 1.0}}, phi_slope=0.1)

AC2_MESHES = [2.0**-k for k in range(4, 10)]
AC2_REF = 2.0**-12

assert math.isclose(MEAN_CIR_T1, 0.5 + 0.5 * math.exp(-1.0))
