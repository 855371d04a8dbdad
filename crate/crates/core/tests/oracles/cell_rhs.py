"""High-precision reference values for the cell right-hand side.

Independent straight-line evaluation with mpmath (50 digits). The printed
values are frozen into the Rust unit tests of `sim::model`.
"""
from mpmath import mp, mpf, exp

mp.dps = 50

K = dict(k0="2e-5", k1="7.5e-4", k2="0.18", k3="1.7e-7", k4="0.036", k5="0.03",
         k6="4.43e-8", k7="338", k8="1.41", k9="17.92", k10="0.00083", k11="0.2",
         k12="237.5", k13="0.99", k14="0.0077", k15="0.2", k16="35", k17="5.8e-7",
         k18="0.04", alpha="5.66e-4", beta="7.58e-4")
K = {k: mpf(v) for k, v in K.items()}
CRIT = mpf(2)


def g1(p2, p3):
    return (mpf("991.2") + mpf("1.12") * p3 - mpf("0.13") * p3 ** mpf("2.2")
            + mpf("0.061") * p3 ** mpf("1.5")
            - mpf("7.93") * p2 / (1 + mpf("0.0936") * p3 - mpf("0.0017") * p3 ** 2
                                  - mpf("0.0023") * p3 * p2))


def g2(x6, c2):
    return exp(mpf("2.496") - mpf("2068.4") / (273 + x6) - mpf("2.07") * c2)


def rhs(x, u):
    x1, x2, x3, x4, x5, x6, x7, x8 = x
    u1, u2, u3, u4, u5 = u
    m = x2 + x3 + x4
    c2, c3 = x2 / m, x3 / m
    p2, p3 = 100 * c2, 100 * c3
    G1 = g1(p2, p3)
    G2 = g2(x6, c2)
    d = p2 - CRIT
    G3 = (mpf("0.531") + mpf("6.958e-7") * u2 - mpf("2.51e-12") * u2 ** 2
          + mpf("3.06e-18") * u2 ** 3 + (mpf("0.431") - mpf("0.1437") * d) / (1 + mpf("7.353") * d))
    G4 = (mpf("0.5517") + mpf("3.8168e-6") * u2) / (1 + mpf("8.271e-6") * u2)
    G5 = mpf("3.8168e-6") * G3 * G4 * u2 / (G2 * (1 - G3))
    k = K
    ledge = k["k1"] * (G1 - x7) / (x1 * k["k0"]) - k["k2"] * (x6 - G1)
    d6 = k["alpha"] / m * (u2 * (G5 + u2 * u5 / (2620 * G2))
                           - k["k9"] * (x6 - x7) / (k["k10"] + k["k11"] * k["k0"] * x1)
                           - (k["k7"] * (x6 - G1) ** 2
                              - k["k8"] * (x6 - G1) * (G1 - x7) / (k["k0"] * x1)))
    d7 = k["beta"] / x1 * (-(k["k12"] * (x6 - G1) * (G1 - x7)
                             - k["k13"] * (G1 - x7) ** 2 / (k["k0"] * x1))
                           + k["k9"] * (G1 - x7) / (k["k15"] * k["k0"] * x1)
                           - (x7 - x8) / (k["k14"] + k["k15"] * k["k0"] * x1))
    d8 = k["k17"] * k["k9"] * ((x7 - x8) / (k["k14"] + k["k15"] * k["k0"] * x1)
                               - (x8 - k["k16"]) / (k["k14"] + k["k18"]))
    return [ledge, u1 - k["k3"] * u2, u3 - k["k4"] * u1, -ledge + k["k5"] * u1,
            k["k6"] * u2 - u4, d6, d7, d8], (G1, G2, G3, G4, G5)


if __name__ == "__main__":
    print("g1(pr_x2=2.5, pr_x3=10.5) =", mp.nstr(g1(mpf("2.5"), mpf("10.5")), 17))
    print("g2(x6=975, c_x2=0.025)    =", mp.nstr(g2(mpf(975), mpf("0.025")), 17))
    # Nominal state: interval midpoints, masses closed from the concentrations.
    c2, c3, x4 = mpf("0.025"), mpf("0.11"), mpf(13750)
    total = x4 / (1 - c2 - c3)
    x = [mpf(3260), c2 * total, c3 * total, x4, mpf(9975), mpf(975), mpf(816), mpf(580)]
    u = [mpf(0), mpf(14000), mpf(0), mpf(0), mpf("0.05")]
    print("nominal state:", [mp.nstr(v, 17) for v in x])
    d, g = rhs(x, u)
    print("rhs:", [mp.nstr(v, 17) for v in d])
    print("g:", [mp.nstr(v, 17) for v in g])
    # Off-nominal state with every input active.
    x = [mpf(4100), mpf(380), mpf(1650), mpf(12900), mpf(10004), mpf(962), mpf(905), mpf(600)]
    u = [mpf("1.5"), mpf(17250), mpf("0.3"), mpf("0.2"), mpf("0.041")]
    d, g = rhs(x, u)
    print("active rhs:", [mp.nstr(v, 17) for v in d])
