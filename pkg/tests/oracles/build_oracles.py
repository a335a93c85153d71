"""Symbolic reference values for the test suite.

Run once with sympy installed; the output ``frozen.json`` is committed and
read by the tests, which do not need sympy themselves.
"""

import json
from pathlib import Path

import sympy as sp

OUT = Path(__file__).with_name("frozen.json")


class Sym:
    """Levi-Civita geometry of a metric, done symbolically."""

    def __init__(self, coords, g):
        self.x = coords
        self.g = sp.Matrix(g)
        self.n = len(coords)
        self.gi = sp.simplify(self.g.inv())
        n, x, gi, gm = self.n, self.x, self.gi, self.g
        self.gam = [[[sp.simplify(sum(gi[k, l] * (sp.diff(gm[j, l], x[i]) + sp.diff(gm[i, l], x[j])
                                                 - sp.diff(gm[i, j], x[l])) for l in range(n)) / 2)
                      for j in range(n)] for i in range(n)] for k in range(n)]
        G = self.gam

        def riem(a, b, c, d):
            r = sp.diff(G[a][d][b], x[c]) - sp.diff(G[a][c][b], x[d])
            r += sum(G[a][c][e] * G[e][d][b] - G[a][d][e] * G[e][c][b] for e in range(n))
            return r

        self.ric = sp.Matrix(n, n, lambda b, d: sp.simplify(sum(riem(a, b, a, d) for a in range(n))))
        self.scalar = sp.simplify(sum(gi[i, j] * self.ric[i, j] for i in range(n) for j in range(n)))
        self.vol = sp.sqrt(sp.Abs(self.g.det()))

    def div(self, X):
        return sp.simplify(sum(sp.diff(self.vol * X[k], self.x[k]) for k in range(self.n)) / self.vol)

    def directional(self, X, f):
        return sum(X[k] * sp.diff(f, self.x[k]) for k in range(self.n))

    def accel(self, X):
        n, G = self.n, self.gam
        return [sum(X[i] * sp.diff(X[k], self.x[i]) for i in range(n))
                + sum(G[k][i][j] * X[i] * X[j] for i in range(n) for j in range(n)) for k in range(n)]

    def lie_g(self, X):
        n, x, g = self.n, self.x, self.g
        return sp.Matrix(n, n, lambda i, j: sum(X[k] * sp.diff(g[i, j], x[k]) + g[k, j] * sp.diff(X[k], x[i])
                                                + g[i, k] * sp.diff(X[k], x[j]) for k in range(n)))


def lapse_terms(coords, N, h):
    """Raychaudhuri terms for the unit normal of a lapse-form metric."""
    t = coords[0]
    n = len(coords)
    g = sp.diag(-N ** 2, *[0] * (n - 1))
    g[1:, 1:] = h
    S = Sym(coords, g)
    xi = [1 / N] + [0] * (n - 1)
    theta = S.div(xi)
    acc = S.accel(xi)
    hm = sp.Matrix(h)
    K = sp.diff(hm, t) / (2 * N)
    hi = hm.inv()
    thK = sum(hi[i, j] * K[i, j] for i in range(n - 1) for j in range(n - 1))
    sig = K - thK / (n - 1) * hm
    s2 = sum(hi[i, k] * hi[j, l] * sig[i, j] * sig[k, l]
             for i in range(n - 1) for j in range(n - 1) for k in range(n - 1) for l in range(n - 1))
    return {"lhs": S.div(acc), "ricci": sum(S.ric[a, b] * xi[a] * xi[b] for a in range(n) for b in range(n)),
            "shear": s2, "expansion": theta ** 2 / (n - 1), "lie_expansion": S.directional(xi, theta),
            "theta": theta, "accel_norm2": sum(g[a, b] * acc[a] * acc[b] for a in range(n) for b in range(n))}


def at(expr, subs):
    return float(sp.N(expr.subs(subs), 30))


def main():
    out = {}
    t, x, y, z, th, ph = sp.symbols("t x y z theta phi", real=True)
    X4 = (t, x, y, z)

    S2 = Sym((th, ph), sp.diag(1, sp.sin(th) ** 2))
    out["sphere"] = {
        "gamma_theta_phiphi_pi4": at(S2.gam[0][1][1], {th: sp.pi / 4}),
        "gamma_phi_thetaphi_pi4": at(S2.gam[1][0][1], {th: sp.pi / 4}),
        "scalar": float(sp.simplify(S2.scalar)),
        "ricci_minus_metric_zero": bool(sp.simplify(S2.ric - S2.g) == sp.zeros(2)),
        "killing_phi_lie_g_zero": bool(sp.simplify(S2.lie_g([0, 1])) == sp.zeros(2)),
        "area_excised_1e-3": float(sp.N(sp.integrate(sp.sin(th), (th, sp.Rational(1, 1000),
                                                                     sp.pi - sp.Rational(1, 1000))) * 2 * sp.pi, 30)),
    }

    def flrw(a):
        S = Sym(X4, sp.diag(-1, a ** 2, a ** 2, a ** 2))
        xi = [1, 0, 0, 0]
        theta = S.div(xi)
        lie = S.directional(xi, theta)
        terms = lapse_terms(X4, sp.Integer(1), sp.diag(a ** 2, a ** 2, a ** 2))
        return S, theta, lie, terms

    S, theta, lie, terms = flrw(t ** sp.Rational(2, 3))
    one = {t: 1}
    out["flrw_matter"] = {
        "det": at(S.g.det(), one), "sqrt_abs_det": at(S.vol, one),
        "gamma_t_xx": at(S.gam[0][1][1], one), "ricci_tt": at(S.ric[0, 0], one),
        "divergence": at(theta, one), "lie_of_divergence": at(lie, one),
        "accel_coeff": at(lie + theta ** 2, one),
        "terms": {k: at(v, one) for k, v in terms.items()},
        "K_xx": at(sp.diff(t ** sp.Rational(4, 3), t) / 2, one),
        "fluid_4pi_mu": at(4 * sp.pi / (6 * sp.pi * t ** 2), one),
        "fluid_gap_expr_zero": bool(sp.simplify(S.ric[0, 0] - 4 * sp.pi / (6 * sp.pi * t ** 2)) == 0),
        "strip_bulk": float(sp.integrate((lie + theta ** 2) * S.vol, (t, 1, 2))),
        "strip_face_upper": float((theta * S.vol).subs(t, 2)),
        "strip_face_lower": float(-(theta * S.vol).subs(t, 1)),
        "volume_t_bounds_0.5_2.5": float(sp.integrate(S.vol, (t, sp.Rational(1, 2), sp.Rational(5, 2)))),
    }
    S, theta, lie, terms = flrw(sp.exp(t))
    out["flrw_desitter"] = {
        "sqrt_abs_det_t1": at(S.vol, one), "divergence": at(theta, one),
        "lie_of_divergence": at(lie, one), "accel_coeff": at(lie + theta ** 2, one),
        "ricci_tt": at(S.ric[0, 0], one), "terms": {k: at(v, one) for k, v in terms.items()},
        "fluid_model": float(4 * sp.pi * (sp.Rational(3, 8) / sp.pi - 3 * sp.Rational(3, 8) / sp.pi)),
    }
    p = [sp.Rational(2, 3), sp.Rational(2, 3), -sp.Rational(1, 3)]
    terms = lapse_terms(X4, sp.Integer(1), sp.diag(*[t ** (2 * q) for q in p]))
    SK = Sym(X4, sp.diag(-1, *[t ** (2 * q) for q in p]))
    out["kasner_like"] = {"terms": {k: at(v, one) for k, v in terms.items()},
                          "ricci_zero": bool(sp.simplify(SK.ric) == sp.zeros(4))}

    pts = [(0.3, 1.1, 0.4, 2.0), (-1.2, 4.0, 0.1, 5.5), (2.1, 0.2, 3.3, 1.7),
           (0.9, 5.9, 2.2, 0.6), (-2.4, 2.8, 4.4, 3.9)]
    fam = {
        "unit_lapse": (sp.Integer(1), (1 + sp.Rational(1, 10) * sp.sin(t + x)) * sp.eye(3)),
        "wavy_lapse": (1 + sp.Rational(3, 10) * sp.sin(x) * sp.cos(t),
                       sp.diag(1 + sp.Rational(1, 10) * sp.sin(t + x), sp.exp(sp.Rational(1, 5) * sp.cos(y + t)),
                               1 + sp.Rational(1, 5) * t ** 2)),
    }
    out["lapse_family"] = {"points": [list(q) for q in pts]}
    for name, (N, h) in fam.items():
        terms = lapse_terms(X4, N, h)
        out["lapse_family"][name] = {k: [at(v, dict(zip(X4, q))) for q in pts] for k, v in terms.items()}

    xs, ys = sp.symbols("x1 x2", real=True)
    E = Sym((xs, ys), sp.eye(2))
    xi = [-xs, -ys]
    th = E.div(xi)
    lhs = E.div([th * xi[0], th * xi[1]])
    out["gaussian_soliton"] = {"lhs": float(lhs), "rhs": float((E.scalar + 2) ** 2 - E.directional(xi, E.scalar)),
                               "lie_g_plus_2g_zero": bool(sp.simplify(E.lie_g(xi) + 2 * E.g) == sp.zeros(2))}
    rot = E.accel([-ys, xs])
    out["rotation_accel_at_1_0"] = [float(r.subs({xs: 1, ys: 0})) for r in rot]
    out["gaussian_l1"] = {str(L): float(sp.N(sp.pi * sp.erf(L) ** 2, 30)) for L in (4, 6, 8)}
    u = sp.symbols("u", real=True)
    out["sin_squared_accel_integrand_is_cos2x"] = bool(
        sp.simplify(E.directional([sp.sin(xs), 0], E.div([sp.sin(xs), 0])) + E.div([sp.sin(xs), 0]) ** 2
                    - sp.cos(2 * xs)) == 0)
    out["exp_sin_integral_2pi"] = float(sp.N(2 * sp.pi * sp.besseli(0, 1), 30))
    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
