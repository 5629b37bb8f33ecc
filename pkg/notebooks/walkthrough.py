# %% [markdown]
# # Sum-of-squares programs with sosgram
#
# A tour of the library: testing a polynomial for SOS, optimizing over
# decision variables, bisection on a bilinear parameter, and set containment.
# Run it top to bottom with `python notebooks/walkthrough.py` or open it as a
# percent-format notebook.

# %%
import numpy as np

from sosgram import GOptions, Options, eq, gsosopt, issos, parse, pcontain, sos_ge, sosopt
from sosgram.cli import load_demo
from sosgram.poly import Monomial

P = parse

# %% [markdown]
# ## Is it a sum of squares?
#
# `issos` returns the verdict, the monomial basis `z`, a Gram matrix `Q` with
# `p = z'Qz` and the factors `f_i` with `p = sum f_i^2`.

# %%
p = P("2*x1^4 + 5*x2^4 + x1^2*x2^2")
feas, z, Q, f = issos(p)
print("feasible:", feas)
print("basis:", [str(m) for m in z])
print("eigenvalues of Q:", np.round(np.linalg.eigvalsh(Q), 6))
for g in f:
    print("  f =", g)

# %% [markdown]
# The Motzkin polynomial is nonnegative (check it on a grid) yet has no SOS
# certificate.

# %%
motzkin = P("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")
g = np.linspace(-2, 2, 401)
X1, X2 = np.meshgrid(g, g)
print("grid minimum:", motzkin.evaluate({"x1": X1, "x2": X2}).min())
print("SOS:", issos(motzkin)[0])

# %% [markdown]
# ## Optimizing over decision variables
#
# `x1^4 + d1*x1^2 + 1` is SOS exactly when `d1 >= -2`.

# %%
res = sosopt([sos_ge(P("x1^4 + d1*x1^2 + d2")), eq(P("d2"), 1)], ["x1"], P("d1"))
print(res.feas, res.obj, res.dopt)

# %% [markdown]
# Both formulations of the SDP give the same answer on well-posed problems.

# %%
for form in ("image", "kernel"):
    r = sosopt([sos_ge(P("x1^4 + d1*x1^2 + d2")), eq(P("d2"), 1)], ["x1"], P("d1"), Options(form=form))
    print(f"{form:>6}: {r.obj:.10f}")

# %% [markdown]
# ## A lower bound for Goldstein-Price
#
# Maximize `gam` such that `f - gam` is SOS. The bundled demo file holds the
# polynomial.

# %%
gp = load_demo("goldstein-price")
for form in ("image", "kernel"):
    r = sosopt(gp.constraints, gp.x, gp.objective, Options(form=form), gp.d_vars)
    print(f"{form:>6}: bound {-r.obj:.8f} ({r.status})")

# %% [markdown]
# ## Bisection: region of attraction of a reversed-time van der Pol oscillator
#
# The constraint multiplies the unknown multiplier `s` by the level `t`, so it
# is bilinear; `gsosopt` bisects on `t`.

# %%
vdp = load_demo("vdp-roa")
r = gsosopt(vdp.constraints, vdp.x, vdp.t, GOptions(), vdp.d_vars)
print("t bounds:", r.tbnds)
print("certified level V <= %.4f" % -r.tbnds[1])

# %% [markdown]
# ## Set containment
#
# The largest disk `{x1^2 + x2^2 <= beta}` inside `{x1^2 + x2^2 <= 4}`.

# %%
beta, s, _ = pcontain(P("x1^2 + x2^2 - 4"), P("x1^2 + x2^2"), [Monomial()])
print("beta in", beta, "with multiplier", s)
