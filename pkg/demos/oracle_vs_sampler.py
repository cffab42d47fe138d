"""Compare both samplers with exact enumeration on the smallest lattices.

    python demos/oracle_vs_sampler.py
"""

import math

from critising.estimators import batch_means
from critising.lattice import build_lattice
from critising.oracle import exact_spin_expectations, grid_graph
from critising.sampler import BETA_C, Algorithm, SamplerConfig, sample_chain


def run(side, boundary, observable, n_samples=20_000):
    spec = build_lattice(side, boundary)
    for alg in Algorithm:
        vals = []
        sample_chain(spec, SamplerConfig(alg, seed=1), n_samples,
                     lambda st, _c: vals.append(observable(st.spins)))
        mean, se = batch_means(vals)
        yield alg.value, mean, se


def main():
    exact = math.sqrt(2) / 3
    print(f"2x2 free, <s0 s1>: exact {exact:.6f}")
    for name, m, se in run(2, "free", lambda s: s[0, 0] * s[0, 1]):
        print(f"  {name:14s} {m:.6f} +- {se:.6f}  ({(m - exact) / se:+.1f} se)")

    exact = exact_spin_expectations(grid_graph(3, "plus"), BETA_C, [(4,)]).values[(4,)]
    print(f"3x3 plus, centre spin: exact {exact:.6f}")
    for name, m, se in run(3, "plus", lambda s: s[1, 1]):
        print(f"  {name:14s} {m:.6f} +- {se:.6f}  ({(m - exact) / se:+.1f} se)")


if __name__ == "__main__":
    main()
