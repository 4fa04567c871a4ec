"""Independent reference values frozen into the unit tests.

Run: python3 tests/oracle/oracle.py
Uses numpy, scipy, statsmodels and scikit-learn only.
"""
import itertools
import math

import numpy as np
from scipy import stats
from sklearn.metrics import roc_auc_score
from statsmodels.stats.oneway import anova_oneway


def show(name, value):
    if isinstance(value, (list, tuple, np.ndarray)):
        print(f"{name} = [{', '.join(repr(float(v)) for v in value)}]")
    else:
        print(f"{name} = {float(value)!r}")


# simplex
p = np.array([0.45, 0.05])
show("normalize_log_045_005", p / p.sum())
show("kl_09_05", 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5))
show("kl_05_09", 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1))
show("hilbert_08_05", math.log(4.0))
show("entropy_09", -(0.9 * math.log(0.9) + 0.1 * math.log(0.1)))
kl = lambda a, b: float(np.sum(a * np.log(a / b)))
a = np.array([0.1, 0.2, 0.3, 0.4]); b = np.array([0.25, 0.25, 0.4, 0.1])
show("kl_4d", kl(a, b))
r = np.log(a / b)
show("hilbert_4d", r.max() - r.min())

# dynamics
w = (np.array([0.5, 0.5]) * np.array([0.9, 0.1])) ** 2
show("alpha2_update", w / w.sum())
w = np.array([0.9, 0.1]) ** 0.5
show("fixed_point_third", w / w.sum())
b3 = np.array([0.6, 0.3, 0.1]); al = 0.7
w = b3 ** (al / (1 - al)); show("fixed_point_07_3", w / w.sum())
show("log_odds_alpha2", [0.0, 2 * math.log(9), 6 * math.log(9), 14 * math.log(9)])
sched = [0.838, 0.815, 0.813, 0.784, 0.742, 0.737, 0.543]
show("table_schedule_geo_mean", float(np.prod(sched)) ** (1 / 7))
show("table_schedule_prod_sq", float(np.prod(np.square(sched))))
show("geo_mean_12_05", math.sqrt(0.6))
# two-parameter update
q = np.array([0.2, 0.3, 0.5]); w = q ** 0.5 * b3 ** 1.5
show("two_param_update", w / w.sum())
# tempered objective at the alpha update equals -log Z
qp = np.array([0.2, 0.3, 0.5]); z = np.sum((qp * b3) ** 0.6)
show("tempered_min_value", -math.log(z))

# records for pooled regression
Q0 = np.array([[0.2, 0.3, 0.5], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]])
B = np.array([[0.6, 0.3, 0.1], [0.2, 0.2, 0.6], [0.5, 0.25, 0.25]])
Q1 = np.array([[0.5, 0.3, 0.2], [0.15, 0.45, 0.4], [0.55, 0.3, 0.15]])
X = np.log(Q0) + np.log(B); Y = np.log(Q1)
n_rec, k = X.shape
D = np.kron(np.eye(n_rec), np.ones((k, 1)))
x = X.ravel(); y = Y.ravel()
coef, *_ = np.linalg.lstsq(np.column_stack([D, x]), y, rcond=None)
resid = y - np.column_stack([D, x]) @ coef
yw = (Y - Y.mean(axis=1, keepdims=True)).ravel()
show("pooled_alpha", coef[-1])
show("pooled_r2", 1 - resid @ resid / (yw @ yw))
show("pooled_intercept", y.mean() - coef[-1] * x.mean())
slope, icpt, rv, *_ = stats.linregress(X[0], Y[0])
show("per_problem_r0", [slope, icpt, rv ** 2])

L0 = np.log(Q0).ravel(); LB = np.log(B).ravel()
Z = np.column_stack([D, L0, LB])
coef2, *_ = np.linalg.lstsq(Z, y, rcond=None)
res2 = y - Z @ coef2
show("two_param_coef", coef2[-2:])
show("two_param_r2", 1 - res2 @ res2 / (yw @ yw))
Zs = Z / np.linalg.norm(Z, axis=0)
show("two_param_cond", np.linalg.cond(Zs))

# stats
v = [3.1, -0.4, 2.2, 7.5, 1.0, 4.4, 0.3]
show("quantile_v", [np.quantile(v, p) for p in (0.0, 0.025, 0.3, 0.5, 0.975, 1.0)])
show("mean_std_v", [np.mean(v), np.std(v, ddof=1)])
xs = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0]); ys = np.array([1.2, 1.9, 3.2, 3.8, 5.3, 5.9])
lr = stats.linregress(xs, ys)
show("fit_line", [lr.slope, lr.intercept, lr.rvalue ** 2])
g = [[2.1, 2.5, 1.9, 2.8], [3.4, 3.9, 2.7], [1.1, 1.6, 0.9, 1.4, 0.7]]
show("one_way_f", stats.f_oneway(*g).statistic)
show("welch_f", anova_oneway(g, use_var="unequal", welch_correction=True).statistic)


def slope_abs(xv, yv):
    return abs(stats.linregress(xv, yv).slope)


xs6 = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]); ys6 = np.array([1.0, 0.7, 0.9, 0.4, 0.5, 0.1])
obs = slope_abs(xs6, ys6)
cnt = sum(1 for perm in itertools.permutations(range(6))
          if slope_abs(xs6[list(perm)], ys6) >= obs * (1 - 1e-12))
show("exact_slope_p", cnt / math.factorial(6))
vals = np.array([1.0, 1.4, 0.8, 2.6, 3.1, 2.2, 2.9]); labs = np.array([0, 0, 0, 1, 1, 1, 1])


def fstat(lv):
    return stats.f_oneway(vals[lv == 0], vals[lv == 1]).statistic


obs = fstat(labs)
cnt = sum(1 for perm in itertools.permutations(range(7))
          if fstat(labs[list(perm)]) >= obs * (1 - 1e-12))
show("exact_f_p", cnt / math.factorial(7))

scores = [0.9, 0.8, 0.8, 0.6, 0.55, 0.4, 0.3, 0.3, 0.2, 0.1]
labels = [1, 1, 0, 1, 0, 1, 0, 0, 1, 0]
show("auroc_ties", roc_auc_score(labels, scores))
conf = np.array(scores); lab = np.array(labels)
bins = np.minimum((conf * 10).astype(int), 9)
ece = sum(abs(conf[bins == i].mean() - lab[bins == i].mean()) * (bins == i).sum()
          for i in range(10) if (bins == i).any()) / len(conf)
show("ece_10", ece)
show("brier", np.mean((conf - lab) ** 2))
