"""Stable integer codes and parameter packing shared by both backends.

Every kernel carries at most two shape parameters, packed as (p1, p2):

    code  kernel                      p1       p2
    ----  --------------------------  -------  ----
    0     linear_truncated            -        -
    1     geman_mcclure               -        -
    2     welsch                      -        -
    3     cauchy                      -        -
    4     charbonnier                 -        -
    5     barron                      alpha    -
    6     mean_error                  -        -
    7     gce                         q        -
    8     sce                         A        -
    9     taylor_ce                   t        -
    10    agce                        q        a
    11    aul                         p        a
    12    ael                         a        -

``z`` is the normalization divisor applied to both sigma and sigma'
(1.0 when normalization is off or the kernel already has unit slope at 0).
"""

LINEAR_TRUNCATED = 0
GEMAN_MCCLURE = 1
WELSCH = 2
CAUCHY = 3
CHARBONNIER = 4
BARRON = 5
MEAN_ERROR = 6
GCE = 7
SCE = 8
TAYLOR_CE = 9
AGCE = 10
AUL = 11
AEL = 12

N_KINDS = 13
