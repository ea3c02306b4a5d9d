"""
Factor graph container, fill-reducing orderings and multifrontal elimination into a Bayes tree.

Each clique stores the square-root conditional of its frontal variables given its separator,
``R_FF x_F + R_FS x_S = d``, and the dense factor it passed up to its parent during
elimination. Incremental smoothing re-eliminates the top of the tree and reuses the cached
factors of the untouched subtrees.
"""
import heapq
import itertools
from collections import defaultdict

import numpy as np
from scipy import linalg
from twisted.logger import Logger

from .exceptions import RankDeficientError, UnknownKeyError
from .factors import LinearFactor

log = Logger()

_RANK_TOLERANCE = 1e-9
_BYTES_PER_SCALAR = 8


class FactorGraph(object):
    """
    Nonlinear factors with stable indices. Removed slots stay ``None`` so indices held by
    callers remain valid.
    """

    def __init__(self, factors=None):
        self._factors = []
        self._adjacency = defaultdict(set)
        for factor in factors or ():
            self.add(factor)

    def add(self, factor):
        index = len(self._factors)
        self._factors.append(factor)
        for key in factor.keys:
            self._adjacency[key].add(index)
        return index

    def add_all(self, factors):
        return [self.add(f) for f in factors]

    def remove(self, index):
        factor = self._factors[index]
        if factor is None:
            raise IndexError('Factor %d was already removed' % index)
        self._factors[index] = None
        for key in factor.keys:
            self._adjacency[key].discard(index)
            if not self._adjacency[key]:
                del self._adjacency[key]
        return factor

    def __getitem__(self, index):
        return self._factors[index]

    def __iter__(self):
        return (f for f in self._factors if f is not None)

    def __len__(self):
        return sum(1 for _ in self)

    def indexed(self):
        return ((i, f) for i, f in enumerate(self._factors) if f is not None)

    def keys(self):
        return sorted(self._adjacency)

    def __contains__(self, key):
        return key in self._adjacency

    def factors_of(self, key):
        return sorted(self._adjacency.get(key, ()))

    def neighbours(self, key):
        out = set()
        for index in self._adjacency.get(key, ()):
            out.update(self._factors[index].keys)
        out.discard(key)
        return out

    def linearize(self, values):
        return [f.linearize(values) for f in self]

    def error(self, values):
        return sum(f.error(values) for f in self)

    def count_by_kind(self):
        counts = defaultdict(int)
        for f in self:
            counts[f.kind] += 1
        return dict(counts)


class Ordering(object):
    """Elimination order: a bijection between keys and positions."""

    def __init__(self, keys):
        self.keys = tuple(keys)
        self.position = dict((k, i) for i, k in enumerate(self.keys))
        if len(self.position) != len(self.keys):
            raise ValueError('Ordering contains duplicate keys')

    def __iter__(self):
        return iter(self.keys)

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, i):
        return self.keys[i]

    def __contains__(self, key):
        return key in self.position

    def __eq__(self, other):
        return isinstance(other, Ordering) and self.keys == other.keys

    def __repr__(self):
        return 'Ordering(%s)' % ', '.join(str(k) for k in self.keys)


def _key_sets(graph):
    if isinstance(graph, FactorGraph):
        return [f.keys for f in graph]
    return [tuple(keys) for keys in graph]


def compute_ordering(graph, constrained_last=(), keys=None):
    """
    Minimum-degree ordering over the variable adjacency of ``graph`` (a FactorGraph or any
    iterable of key tuples). Keys in ``constrained_last`` are held back and eliminated after
    every other key. Ties go to the smaller Key.
    """
    adjacency = defaultdict(set)
    for factor_keys in _key_sets(graph):
        for key in factor_keys:
            adjacency[key].update(factor_keys)
    for key in keys or ():
        adjacency.setdefault(key, set())
    for key, nbrs in adjacency.items():
        nbrs.discard(key)

    constrained = set(constrained_last)
    missing = constrained - set(adjacency)
    if missing:
        raise UnknownKeyError(sorted(missing)[0])

    order = []
    for group in (sorted(set(adjacency) - constrained), sorted(constrained)):
        degree = dict((k, len(adjacency[k])) for k in group)
        heap = [(d, k) for k, d in degree.items()]
        heapq.heapify(heap)
        remaining = set(group)
        while remaining:
            d, key = heapq.heappop(heap)
            # stale entry
            if key not in remaining or degree[key] != d:
                continue
            remaining.discard(key)
            order.append(key)
            nbrs = adjacency.pop(key)
            for n in nbrs:
                adjacency[n].discard(key)
                adjacency[n].update(nbrs - {n})
                if n in remaining:
                    degree[n] = len(adjacency[n])
                    heapq.heappush(heap, (degree[n], n))
    return Ordering(order)


class Clique(object):
    """
    Frontal variables (in elimination order) conditioned on the separator. The conditional
    is ``r_ff x_F + r_fs x_S = d``; ``cached`` is the factor on the separator this clique
    passed to its parent.
    """
    _ids = itertools.count()

    def __init__(self, frontals, separator, updated_at=None):
        self.id = next(self._ids)
        self.frontals = list(frontals)
        self.separator = list(separator)
        self.parent = None
        self.children = []
        self.r_ff = None
        self.r_fs = None
        self.d = None
        self.cached = None
        self.updated_at = updated_at

    @property
    def keys(self):
        return self.frontals + self.separator

    @property
    def frontal_dim(self):
        return sum(k.dim for k in self.frontals)

    @property
    def separator_dim(self):
        return sum(k.dim for k in self.separator)

    @property
    def size(self):
        return self.frontal_dim + self.separator_dim

    def nbytes(self):
        f, s = self.frontal_dim, self.separator_dim
        cached = s * (s + 1) if self.cached is not None else 0
        return _BYTES_PER_SCALAR * (f * (f + s + 1) + cached)

    def ancestors(self):
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def label(self):
        frontals = ', '.join(str(k) for k in self.frontals)
        if not self.separator:
            return frontals
        return '%s | %s' % (frontals, ', '.join(str(k) for k in self.separator))

    def __repr__(self):
        return 'Clique(%s)' % self.label()


class BayesTree(object):

    def __init__(self):
        self.roots = []
        self.clique_of = {}

    def __contains__(self, key):
        return key in self.clique_of

    def __len__(self):
        return len(self.cliques())

    def keys(self):
        return list(self.clique_of)

    def add_root(self, clique):
        self.roots.append(clique)
        self._index(clique)

    def attach(self, child, parent):
        child.parent = parent
        parent.children.append(child)
        self._index(child)

    def _index(self, clique):
        for key in clique.frontals:
            self.clique_of[key] = clique

    def cliques(self):
        """Pre-order (parents before children)."""
        out = []
        stack = list(reversed(self.roots))
        while stack:
            clique = stack.pop()
            out.append(clique)
            stack.extend(reversed(clique.children))
        return out

    def postorder(self):
        return list(reversed(self.cliques()))

    def remove_top(self, keys):
        """
        Detach the cliques holding ``keys`` and all their ancestors. Returns the removed
        cliques and the orphaned subtrees hanging below them.
        """
        removed = {}
        for key in keys:
            clique = self.clique_of.get(key)
            while clique is not None and clique.id not in removed:
                removed[clique.id] = clique
                clique = clique.parent
        removed_cliques = list(removed.values())
        orphans = []
        for clique in removed_cliques:
            for child in clique.children:
                if child.id not in removed:
                    child.parent = None
                    orphans.append(child)
            for key in clique.frontals:
                del self.clique_of[key]
        self.roots = [r for r in self.roots if r.id not in removed]
        orphans.sort(key=lambda c: c.id)
        return removed_cliques, orphans

    def nbytes(self):
        return sum(c.nbytes() for c in self.cliques())

    def check_running_intersection(self):
        """Every separator key is a frontal of an ancestor and every key is frontal once."""
        seen = set()
        for clique in self.cliques():
            above = set()
            for ancestor in clique.ancestors():
                above.update(ancestor.frontals)
            if not set(clique.separator) <= above:
                return False
            if seen & set(clique.frontals):
                return False
            seen.update(clique.frontals)
        return seen == set(self.clique_of)


def symbolic_cliques(key_sets, ordering, updated_at=None):
    """
    Variable-wise symbolic elimination followed by clique formation in reverse order.
    Returns the new roots and the cliques in post-order.
    """
    position = ordering.position
    adjacency = defaultdict(set)
    for factor_keys in key_sets:
        for key in factor_keys:
            if key not in position:
                raise UnknownKeyError(key, 'Factor key %s is missing from the ordering' % (key,))
            adjacency[key].update(factor_keys)

    separators = {}
    for key in ordering:
        later = set(k for k in adjacency[key] if position[k] > position[key])
        separators[key] = later
        for n in later:
            adjacency[n].update(later - {n})

    roots = []
    clique_of = {}
    created = []
    for key in reversed(ordering.keys):
        sep = separators[key]
        if not sep:
            clique = Clique([key], [], updated_at)
            roots.append(clique)
            created.append(clique)
        else:
            parent = clique_of[min(sep, key=position.__getitem__)]
            if len(sep) == len(parent.frontals) + len(parent.separator):
                parent.frontals.insert(0, key)
                clique = parent
            else:
                clique = Clique([key], sorted(sep, key=position.__getitem__), updated_at)
                clique.parent = parent
                parent.children.append(clique)
                created.append(clique)
        clique_of[key] = clique
    return roots, list(reversed(created))


def _split(keys):
    offsets = {}
    offset = 0
    for key in keys:
        offsets[key] = offset
        offset += key.dim
    return offsets, offset


def eliminate_clique(clique, factors):
    """Dense QR of the stacked factors into the clique's conditional and its cached factor."""
    cols, width = _split(clique.keys)
    rows = sum(f.rows for f in factors)
    dim_f = clique.frontal_dim
    ab = np.zeros((rows, width + 1))
    row = 0
    for factor in factors:
        for key, block in zip(factor.keys, factor.blocks):
            c = cols[key]
            ab[row:row + factor.rows, c:c + key.dim] += block
        ab[row:row + factor.rows, width] = factor.b
        row += factor.rows

    if rows < dim_f:
        raise RankDeficientError(_key_at(clique.frontals, rows))
    r = linalg.qr(ab, mode='r', check_finite=False)[0]
    diag = np.abs(np.diag(r[:dim_f, :dim_f]))
    scale = max(1.0, float(diag.max())) if len(diag) else 1.0
    weak = np.nonzero(diag <= _RANK_TOLERANCE * scale)[0]
    if len(weak):
        raise RankDeficientError(_key_at(clique.frontals, int(weak[0])))

    # keep a positive diagonal
    signs = np.where(np.diag(r[:dim_f, :dim_f]) < 0.0, -1.0, 1.0)
    top = r[:dim_f] * signs[:, None]
    clique.r_ff = np.triu(top[:, :dim_f])
    clique.r_fs = top[:, dim_f:width]
    clique.d = top[:, width]

    if clique.separator:
        below = r[dim_f:min(r.shape[0], width)]
        sep_cols, _ = _split(clique.separator)
        blocks = [below[:, dim_f + sep_cols[k]:dim_f + sep_cols[k] + k.dim] for k in clique.separator]
        clique.cached = LinearFactor(clique.separator, blocks, below[:, width])
    else:
        clique.cached = None
    return clique.cached


def _key_at(keys, scalar_index):
    offset = 0
    for key in keys:
        offset += key.dim
        if scalar_index < offset:
            return key
    return keys[-1]


def eliminate_into(tree, lin_factors, ordering, updated_at=None):
    """
    Eliminate ``lin_factors`` along ``ordering`` and add the resulting cliques to ``tree``
    as new roots. Returns the new cliques in post-order.
    """
    roots, created = symbolic_cliques([f.keys for f in lin_factors], ordering, updated_at)
    position = ordering.position
    assigned = defaultdict(list)
    for factor in lin_factors:
        first = min(factor.keys, key=position.__getitem__)
        assigned[first].append(factor)

    for clique in created:
        factors = []
        for key in clique.frontals:
            factors.extend(assigned.get(key, ()))
        for child in clique.children:
            if child.cached is not None:
                factors.append(child.cached)
        eliminate_clique(clique, factors)

    for root in roots:
        tree.roots.append(root)
    for clique in created:
        tree._index(clique)
    return created


def eliminate(lin_factors, ordering, updated_at=None):
    tree = BayesTree()
    eliminate_into(tree, lin_factors, ordering, updated_at)
    log.debug('eliminated {n} variables into {c} cliques', n=len(ordering), c=len(tree))
    return tree


def solve(tree):
    """Top-down back-substitution; returns Key -> tangent vector."""
    delta = {}
    for clique in tree.cliques():
        rhs = clique.d
        if clique.separator:
            rhs = rhs - clique.r_fs.dot(np.concatenate([delta[k] for k in clique.separator]))
        x = linalg.solve_triangular(clique.r_ff, rhs, lower=False, check_finite=False)
        offset = 0
        for key in clique.frontals:
            delta[key] = x[offset:offset + key.dim]
            offset += key.dim
    return delta


def marginal_covariance(tree, key):
    """
    Marginal covariance of ``key`` from the conditionals on the path between its clique and
    the root, which together form a closed square-root system.
    """
    clique = tree.clique_of.get(key)
    if clique is None:
        raise UnknownKeyError(key)
    path = [clique] + list(clique.ancestors())
    keys = []
    for c in path:
        keys.extend(c.frontals)
    cols, width = _split(keys)
    r = np.zeros((width, width))
    for c in path:
        row = cols[c.frontals[0]]
        f = c.frontal_dim
        r[row:row + f, row:row + f] = c.r_ff
        sep_cols, _ = _split(c.separator)
        for s in c.separator:
            r[row:row + f, cols[s]:cols[s] + s.dim] = c.r_fs[:, sep_cols[s]:sep_cols[s] + s.dim]
    e = np.zeros((width, key.dim))
    e[cols[key]:cols[key] + key.dim] = np.eye(key.dim)
    z = linalg.solve_triangular(r, e, trans='T', lower=False, check_finite=False)
    cov = z.T.dot(z)
    return 0.5 * (cov + cov.T)


def clique_stats(tree):
    """Clique sizes as frontal+separator scalar dimensions and as variable counts."""
    cliques = tree.cliques()
    if not cliques:
        return dict(num_cliques=0, max_clique_size=0, avg_clique_size=0.0,
                    max_clique_vars=0, avg_clique_vars=0.0)
    sizes = [c.size for c in cliques]
    counts = [len(c.keys) for c in cliques]
    return dict(
        num_cliques=len(cliques),
        max_clique_size=max(sizes),
        avg_clique_size=float(np.mean(sizes)),
        max_clique_vars=max(counts),
        avg_clique_vars=float(np.mean(counts)),
    )


def to_dot(tree, name='bayestree'):
    lines = ['digraph %s {' % name]
    for clique in tree.cliques():
        lines.append('  c%d [shape=box, label="%s"];' % (clique.id, clique.label()))
        if clique.parent is not None:
            lines.append('  c%d -> c%d;' % (clique.parent.id, clique.id))
    lines.append('}')
    return '\n'.join(lines) + '\n'


def dense_system(lin_factors, keys):
    """Stacked whitened Jacobian and right hand side over ``keys``."""
    cols, width = _split(keys)
    rows = sum(f.rows for f in lin_factors)
    a = np.zeros((rows, width))
    b = np.zeros(rows)
    row = 0
    for factor in lin_factors:
        for key, block in zip(factor.keys, factor.blocks):
            a[row:row + factor.rows, cols[key]:cols[key] + key.dim] += block
        b[row:row + factor.rows] = factor.b
        row += factor.rows
    return a, b, cols
