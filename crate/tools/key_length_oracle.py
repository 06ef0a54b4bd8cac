"""Key-length reference values evaluated with 60-digit arithmetic.

Writes testdata/key_length_oracle.csv:

    python3 tools/key_length_oracle.py > testdata/key_length_oracle.csv

Tuples whose exact value lies within 1e-6 of an integer are skipped, so the
floor is insensitive to double-precision rounding.
"""
import random
from mpmath import mp, mpf, log, floor
mp.dps = 60
random.seed(20261016)
def h(p):
    p = mpf(p)
    if p == 0 or p == 1: return mpf(0)
    return -p*log(p,2)-(1-p)*log(1-p,2)
def L(s0,s1,phi,lam,es,ec):
    s0,s1,lam,es,ec=map(mpf,(s0,s1,lam,es,ec))
    v = s0 + s1*(1-h(phi)) - lam - 6*log(19/es,2) - log(2/ec,2)
    return int(floor(v)) if v > 0 else 0, v
rows=[("1000","9000","0","0","1e-9","1e-9")]
while len(rows)<100:
    s0=f"{random.uniform(0,2e5):.3f}"; s1=f"{random.uniform(0,5e6):.3f}"
    phi=f"{random.uniform(0,0.15 if len(rows)<90 else 0.5):.5f}"; lam=f"{random.uniform(0,0.35)*float(s1):.2f}"
    es=random.choice(["1e-6","1e-9","1e-10","1e-12","5e-8"]); ec=random.choice(["1e-9","1e-12","1e-6"])
    l,v=L(s0,s1,phi,lam,es,ec)
    if abs(v-floor(v))<1e-6 or abs(v-floor(v)-1)<1e-6: continue
    rows.append((s0,s1,phi,lam,es,ec))
print("s0,s1,phi,lambda,eps_sec,eps_cor,l")
for r in rows:
    l, _ = L(*r)
    print(",".join(r) + f",{l}")
