"""Piecewise-linear finite elements for the weighted Neumann problem.

Insulating regions are removed from the system (their interior vertices
carry no degrees of freedom; the natural zero-flux condition appears on
their boundary), perfectly conducting components are collapsed to a single
degree of freedom each, and the pure-Neumann kernel is grounded with a
Lagrange multiplier enforcing a zero mean on the measurement arc.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

STATUS_FREE = 0
STATUS_REMOVED = 1
STATUS_MERGED = 2


class SolverError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class DofMap:
    """Vertex-to-DOF assignment for a labeled mesh.

    ``dof_of_vertex`` is -1 for removed vertices; vertices of the k-th
    conducting component share the DOF ``n_plain + k``.
    """

    vertex_status: np.ndarray
    dof_of_vertex: np.ndarray
    conductor_of_vertex: np.ndarray
    n_dofs: int
    n_conductors: int

    def expand(self, u_dof, fill=0.0):
        """Per-vertex values from DOF coefficients (removed vertices filled)."""
        out = np.full(len(self.dof_of_vertex), fill, dtype=float)
        has = self.dof_of_vertex >= 0
        out[has] = u_dof[self.dof_of_vertex[has]]
        return out


def build_dof_map(mesh, allow_conductor_on_insulator=True):
    """DOF map from the mesh labels.

    Vertices strictly inside D0 (every incident triangle insulating) are
    removed; each vertex-connected component of Dinf triangles collapses to
    one DOF.  A conducting component touching the outer boundary is
    rejected (the floating-conductor model needs the conductor strictly
    inside).  Contact between a conductor and an insulating region is
    tolerated: the discrete system stays well posed, and the upper
    bracketing field produces exactly this contact.
    """
    nv = mesh.num_vertices
    region = mesh.triangle_region
    tris = mesh.triangles

    incident_non_d0 = np.zeros(nv, dtype=bool)
    incident_any = np.zeros(nv, dtype=bool)
    for lab_mask, flag in ((region != "D0", incident_non_d0),
                           (np.ones(len(tris), dtype=bool), incident_any)):
        vs = tris[lab_mask].ravel()
        flag[vs] = True
    removed = incident_any & ~incident_non_d0

    # Conducting components via union-find over Dinf triangle vertices.
    parent = np.arange(nv)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    dinf_tris = tris[region == "Dinf"]
    for i, j, k in dinf_tris:
        union(i, j)
        union(j, k)
    conductor_vertices = np.unique(dinf_tris.ravel()) if len(dinf_tris) else np.array([], dtype=int)

    roots = {}
    conductor_of_vertex = -np.ones(nv, dtype=int)
    for v in conductor_vertices:
        r = find(v)
        if r not in roots:
            roots[r] = len(roots)
        conductor_of_vertex[v] = roots[r]
    n_conductors = len(roots)

    boundary_vertices = np.unique(mesh.boundary_edges.ravel())
    if np.any(conductor_of_vertex[boundary_vertices] >= 0):
        raise ConfigurationError(
            "a perfectly conducting component touches the domain boundary")
    if len(conductor_vertices) and np.any(removed[conductor_vertices]):
        raise ConfigurationError("conductor vertex marked for removal")

    status = np.full(nv, STATUS_FREE, dtype=np.int8)
    status[removed] = STATUS_REMOVED
    status[conductor_of_vertex >= 0] = STATUS_MERGED

    dof_of_vertex = -np.ones(nv, dtype=int)
    plain = (status == STATUS_FREE)
    dof_of_vertex[plain] = np.arange(int(plain.sum()))
    n_plain = int(plain.sum())
    merged = conductor_of_vertex >= 0
    dof_of_vertex[merged] = n_plain + conductor_of_vertex[merged]
    n_dofs = n_plain + n_conductors

    dofmap = DofMap(vertex_status=status, dof_of_vertex=dof_of_vertex,
                    conductor_of_vertex=conductor_of_vertex,
                    n_dofs=n_dofs, n_conductors=n_conductors)
    _check_dof_connectivity(mesh, dofmap)
    return dofmap


def _check_dof_connectivity(mesh, dofmap):
    """All DOFs must be reachable from the measurement arc through
    conducting triangles, otherwise the grounded system is singular."""
    region = mesh.triangle_region
    tris = mesh.triangles[region != "D0"]
    n = dofmap.n_dofs
    if n == 0:
        raise ConfigurationError("no degrees of freedom remain")
    adj = [[] for _ in range(n)]
    dv = dofmap.dof_of_vertex
    for i, j, k in tris:
        d = {dv[i], dv[j], dv[k]} - {-1}
        d = sorted(d)
        for a in range(len(d)):
            for b in range(a + 1, len(d)):
                adj[d[a]].append(d[b])
                adj[d[b]].append(d[a])
    gamma_vertices = np.unique(mesh.gamma_edges().ravel())
    gamma_dofs = set(dv[gamma_vertices].tolist()) - {-1}
    if not gamma_dofs:
        raise ConfigurationError("measurement arc carries no degrees of freedom")
    seen = set(gamma_dofs)
    stack = list(gamma_dofs)
    while stack:
        t = stack.pop()
        for nb in adj[t]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != n:
        raise ConfigurationError(
            "free degrees of freedom are disconnected from the measurement arc")


@dataclass
class StiffnessSystem:
    """Grounded stiffness system: symmetric PSD matrix over the free DOFs
    plus the mean-on-gamma constraint vector."""

    matrix: sp.csr_matrix
    constraint: np.ndarray
    dofmap: DofMap
    mesh: object
    field: object
    _factor: object = None

    @property
    def n(self):
        return self.dofmap.n_dofs

    def bordered(self):
        c = sp.csr_matrix(self.constraint[:, None])
        return sp.bmat([[self.matrix, c], [c.T, None]], format="csc")

    def factor(self):
        if self._factor is None:
            self._factor = spla.splu(self.bordered())
        return self._factor


def assemble(mesh, fld, dofmap, quad_depth=None):
    """Assemble the weighted stiffness matrix and the gamma-mean constraint.

    Element contributions are sigma-integral times the constant P1 gradient
    products; insulating and conducting triangles are skipped (the latter
    collapse to a single DOF and contribute nothing).
    """
    if quad_depth is not None and quad_depth != fld.quad_depth:
        fld.quad_depth = quad_depth
        fld._element_integrals = None
    sigma_int = fld.element_integrals()
    region = mesh.triangle_region
    active = ~np.isin(region, ("D0", "Dinf"))

    tris = mesh.triangles[active]
    coef = sigma_int[active]
    if np.any(~np.isfinite(coef)):
        raise SolverError("nonfinite element integral in assembly")

    coords = mesh.vertices[tris]
    # Edge vectors opposite each local vertex.
    e = np.stack([coords[:, 2] - coords[:, 1],
                  coords[:, 0] - coords[:, 2],
                  coords[:, 1] - coords[:, 0]], axis=1)
    area2 = (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    area = 0.5 * np.abs(area2)
    # K_ij = (integral of sigma) * (e_i . e_j) / (4 A^2)
    dots = np.einsum("nid,njd->nij", e, e)
    ke = coef[:, None, None] * dots / (4.0 * area[:, None, None] ** 2)

    dv = dofmap.dof_of_vertex
    dofs = dv[tris]
    if np.any(dofs < 0):
        raise SolverError("active triangle references a removed vertex")
    rows = np.repeat(dofs, 3, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, 3)).reshape(-1)
    vals = ke.reshape(-1)
    a = sp.coo_matrix((vals, (rows, cols)),
                      shape=(dofmap.n_dofs, dofmap.n_dofs)).tocsr()
    a.sum_duplicates()

    constraint = gamma_mass_vector(mesh, dofmap)
    return StiffnessSystem(matrix=a, constraint=constraint, dofmap=dofmap,
                           mesh=mesh, field=fld)


def gamma_mass_vector(mesh, dofmap):
    """c_i = integral over gamma of the i-th hat function trace."""
    c = np.zeros(dofmap.n_dofs)
    dv = dofmap.dof_of_vertex
    for i, j in mesh.gamma_edges():
        if dv[i] < 0 or dv[j] < 0:
            raise ConfigurationError(
                "measurement arc touches an insulated vertex")
        length = float(np.hypot(*(mesh.vertices[j] - mesh.vertices[i])))
        c[dv[i]] += 0.5 * length
        c[dv[j]] += 0.5 * length
    return c


# 4-point Gauss-Legendre on [0, 1].
_GL4_X = np.array([0.069431844202973712, 0.33000947820757187,
                   0.66999052179242813, 0.93056815579702629])
_GL4_W = np.array([0.17392742256872693, 0.32607257743127307,
                   0.32607257743127307, 0.17392742256872693])


@dataclass
class NeumannLoad:
    """Discrete current load: b_i = <f, phi_i> on gamma, projected to the
    gamma-mean-free space."""

    b: np.ndarray
    density_mean: float
    label: str = ""

    def check_mean_free(self, system, tol=1e-12):
        total = float(np.sum(self.b))
        scale = max(1.0, float(np.abs(self.b).sum()))
        return abs(total) <= tol * scale


def neumann_load(mesh, dofmap, density, label=""):
    """Build the load vector for a current density given as a callable on
    physical boundary points; the density is mean-projected on gamma."""
    dv = dofmap.dof_of_vertex
    b = np.zeros(dofmap.n_dofs)
    total_f = 0.0
    total_len = 0.0
    edges = mesh.gamma_edges()
    for i, j in edges:
        pi, pj = mesh.vertices[i], mesh.vertices[j]
        length = float(np.hypot(*(pj - pi)))
        pts = pi[None, :] + _GL4_X[:, None] * (pj - pi)[None, :]
        fvals = np.asarray(density(pts), dtype=float)
        w = _GL4_W * length
        b[dv[i]] += float(np.sum(w * fvals * (1.0 - _GL4_X)))
        b[dv[j]] += float(np.sum(w * fvals * _GL4_X))
        total_f += float(np.sum(w * fvals))
        total_len += length
    mean = total_f / total_len
    b -= mean * gamma_mass_vector(mesh, dofmap)
    return NeumannLoad(b=b, density_mean=mean, label=label)


@dataclass
class PotentialSolution:
    u: np.ndarray          # DOF coefficients, gamma-mean-free representative
    multiplier: float
    residual: float

    def vertex_values(self, dofmap, fill=np.nan):
        return dofmap.expand(self.u, fill=fill)


def solve_neumann(system, load, rtol=1e-10):
    """Solve the grounded variational problem for one current load.

    The returned representative satisfies the gamma-mean-zero constraint;
    residuals above rtol*|b| raise SolverError after one refinement pass.
    """
    if not load.check_mean_free(system):
        raise SolverError("load is not gamma-mean-free")
    n = system.n
    rhs = np.concatenate([load.b, [0.0]])
    lu = system.factor()
    x = lu.solve(rhs)
    kmat = system.bordered()
    res = rhs - kmat @ x
    x = x + lu.solve(res)
    res = rhs - kmat @ x
    bnorm = float(np.linalg.norm(load.b))
    rnorm = float(np.linalg.norm(res))
    if bnorm > 0 and rnorm > rtol * bnorm:
        raise SolverError(f"solver residual {rnorm:.3e} exceeds {rtol:.1e}*|b|")
    u, lam = x[:n], float(x[n])
    gmean = float(np.dot(system.constraint, u))
    gscale = max(1.0, float(np.abs(u).max()) * float(np.sum(system.constraint)))
    if abs(gmean) > 1e-10 * gscale:
        raise SolverError(f"gamma mean {gmean:.3e} not zeroed by the multiplier")
    return PotentialSolution(u=u, multiplier=lam, residual=rnorm)


def energy(system, solution_or_vector, load):
    """Quadratic energy J(v) = v^T A v - 2 b^T v for a DOF vector."""
    v = solution_or_vector.u if isinstance(solution_or_vector, PotentialSolution) \
        else np.asarray(solution_or_vector, dtype=float)
    if v.shape != (system.n,):
        raise SolverError("energy: coefficient vector has wrong dimension")
    return float(v @ (system.matrix @ v) - 2.0 * float(load.b @ v))


def dirichlet_energy(system, solution):
    """sigma-weighted Dirichlet energy of the solution (A-quadratic form)."""
    u = solution.u
    return float(u @ (system.matrix @ u))


def embed_dof_vector(u_src, dofmap_src, dofmap_dst):
    """Re-express DOF coefficients on another DOF map of the same mesh.

    Valid when the source space is contained in the destination space
    (destination merges no vertices the source kept distinct with different
    values, and only destination-removed vertices are dropped).
    """
    vertex_vals = dofmap_src.expand(u_src, fill=0.0)
    out = np.zeros(dofmap_dst.n_dofs)
    counts = np.zeros(dofmap_dst.n_dofs)
    for v, d in enumerate(dofmap_dst.dof_of_vertex):
        if d >= 0:
            out[d] += vertex_vals[v]
            counts[d] += 1
    counts[counts == 0] = 1.0
    return out / counts


def export_potential(mesh, dofmap, solution):
    """Companion text format for potentials: `nv` then one value per vertex
    (nan marks removed vertices)."""
    vals = solution.vertex_values(dofmap)
    lines = [f"{len(vals)}"]
    lines += [f"{v:.17g}" for v in vals]
    return "\n".join(lines) + "\n"
