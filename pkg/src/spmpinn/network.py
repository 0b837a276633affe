"""Network architectures, weight storage, and differentiation entry points.

Four heads predict the SPM state variables: cs_an(t, r), cs_ca(t, r), phie(t),
phis_ca(t), all over scaled inputs in [0, 1].  The merged architecture runs a
shared trunk over t, concatenates the trunk features with r for a second trunk
feeding the concentration branches, while the potential branches hang directly
off the t-features.  The split architecture gives every head its own
independent branch.  Branch stacks come in three kinds: plain dense layers,
residual blocks (x + f(x) with f two dense layers), and gradient-pathology
blocks (two gate streams U, V blended per layer through a learned gate Z).

Branch depth defaults are chosen so every (architecture, block kind) variant
lands within 10% of 9000 trainable parameters, matching the comparison setup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ArtifactError, ConfigError, ShapeMismatch

HEADS = ("cs_an", "cs_ca", "phie", "phis_ca")
CONC_HEADS = ("cs_an", "cs_ca")
POT_HEADS = ("phie", "phis_ca")

DTYPES = {"f64": np.float64, "f32": np.float32}

# branch affine counts that land each variant within 10% of 9000 parameters
_DEFAULT_BRANCH_LAYERS = {
    ("merged", "dense"): 5,
    ("merged", "residual"): 5,
    ("merged", "gradient_pathology"): 5,
    ("split", "dense"): 6,
    ("split", "residual"): 6,
    ("split", "gradient_pathology"): 8,
}


@dataclass(frozen=True)
class NetworkSpec:
    architecture: str = "merged"
    block_kind: str = "gradient_pathology"
    width: int = 20
    merged_trunk_layers: int = 1       # layers in each of the t- and r-trunks
    branch_layers: int = 5             # affine stages per branch stack
    activation: str = "tanh"
    precision: str = "f64"

    def __post_init__(self):
        if self.architecture not in ("merged", "split"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.block_kind not in ("dense", "residual", "gradient_pathology"):
            raise ConfigError(f"unknown block kind {self.block_kind!r}")
        if self.activation != "tanh":
            raise ConfigError("hidden activation is fixed to tanh")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be one of {sorted(DTYPES)}")
        if self.width < 1 or self.branch_layers < 1 or self.merged_trunk_layers < 1:
            raise ConfigError("width and layer counts must be positive")
        if self.block_kind in ("residual", "gradient_pathology") and self.branch_layers < 3:
            raise ConfigError(f"{self.block_kind} branches need >= 3 affine stages")

    @property
    def dtype(self):
        return DTYPES[self.precision]

    @property
    def gp_blocks(self) -> int:
        """Gradient-pathology block count: U/V/H entry plus one per gate layer."""
        return self.branch_layers - 2

    @property
    def residual_blocks(self) -> int:
        return (self.branch_layers - 1) // 2


def default_spec(architecture: str = "merged", block_kind: str = "gradient_pathology",
                 **overrides) -> NetworkSpec:
    """Spec with the depth that puts this variant in the ~9000-parameter window."""
    layers = overrides.pop("branch_layers",
                           _DEFAULT_BRANCH_LAYERS[(architecture, block_kind)])
    return NetworkSpec(architecture=architecture, block_kind=block_kind,
                       branch_layers=layers, **overrides)


# -- parameter layout ------------------------------------------------------


def _branch_entries(prefix: str, in_width: int, spec: NetworkSpec):
    w = spec.width
    kind = spec.block_kind
    entries = []
    if kind == "dense":
        cur = in_width
        for i in range(spec.branch_layers):
            entries.append((f"{prefix}.{i}", (cur, w)))
            cur = w
    elif kind == "residual":
        n_blocks = spec.residual_blocks
        lead = spec.branch_layers - 2 * n_blocks
        cur = in_width
        for i in range(lead):
            entries.append((f"{prefix}.lead{i}", (cur, w)))
            cur = w
        if cur != w:
            raise ConfigError("residual branch needs a lead layer to reach full width")
        for k in range(n_blocks):
            entries.append((f"{prefix}.block{k}.0", (w, w)))
            entries.append((f"{prefix}.block{k}.1", (w, w)))
    else:
        entries.append((f"{prefix}.u", (in_width, w)))
        entries.append((f"{prefix}.v", (in_width, w)))
        entries.append((f"{prefix}.h", (in_width, w)))
        for k in range(spec.gp_blocks - 1):
            entries.append((f"{prefix}.z{k}", (w, w)))
    entries.append((f"{prefix}.out", (w, 1)))
    return entries


def _layer_entries(spec: NetworkSpec):
    """Ordered (name, (fan_in, fan_out)) affine list; weight draw order follows it."""
    w = spec.width
    entries = []
    if spec.architecture == "merged":
        cur = 1
        for i in range(spec.merged_trunk_layers):
            entries.append((f"trunk_t.{i}", (cur, w)))
            cur = w
        cur = w + 1
        for i in range(spec.merged_trunk_layers):
            entries.append((f"trunk_r.{i}", (cur, w)))
            cur = w
        for head in HEADS:
            entries.extend(_branch_entries(f"branch.{head}", w, spec))
    else:
        for head in HEADS:
            in_width = 2 if head in CONC_HEADS else 1
            entries.extend(_branch_entries(f"branch.{head}", in_width, spec))
    return entries


def layout(spec: NetworkSpec):
    """Flat-storage layout: (tensor name, shape, offset) per trainable tensor."""
    out = []
    offset = 0
    for name, (fi, fo) in _layer_entries(spec):
        out.append((f"{name}.W", (fi, fo), offset))
        offset += fi * fo
        out.append((f"{name}.b", (fo,), offset))
        offset += fo
    return tuple(out)


def param_count(spec: NetworkSpec) -> int:
    last = layout(spec)[-1]
    return last[2] + int(np.prod(last[1]))


@dataclass
class ParameterVector:
    """Flat trainable-value storage plus the layout to address it."""

    data: np.ndarray
    spec: NetworkSpec

    def __post_init__(self):
        n = param_count(self.spec)
        if self.data.shape != (n,):
            raise ShapeMismatch(f"parameter vector has {self.data.shape}, expected ({n},)")
        # a stray f64 buffer under an f32 spec would silently promote every op
        self.data = np.ascontiguousarray(self.data, dtype=self.spec.dtype)

    def view(self, name: str) -> np.ndarray:
        for nm, shape, off in layout(self.spec):
            if nm == name:
                return self.data[off:off + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    def unpack(self) -> dict[str, np.ndarray]:
        out = {}
        for nm, shape, off in layout(self.spec):
            out[nm] = self.data[off:off + int(np.prod(shape))].reshape(shape)
        return out

    @classmethod
    def pack(cls, tensors: dict[str, np.ndarray], spec: NetworkSpec) -> "ParameterVector":
        data = np.empty(param_count(spec), dtype=DTYPES[spec.precision])
        for nm, shape, off in layout(spec):
            arr = np.asarray(tensors[nm])
            if arr.shape != shape:
                raise ShapeMismatch(f"{nm}: {arr.shape} != {shape}")
            data[off:off + arr.size] = arr.ravel()
        return cls(data, spec)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.data.copy(), self.spec)


def init_weights(spec: NetworkSpec, scheme: str = "glorot_normal",
                 seed: int = 0) -> ParameterVector:
    """Scheme-variance normal weights, zero biases; draw order = layout order."""
    if scheme not in ("glorot_normal", "he_normal"):
        raise ConfigError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    data = np.empty(param_count(spec), dtype=spec.dtype)
    for nm, shape, off in layout(spec):
        size = int(np.prod(shape))
        if nm.endswith(".b"):
            data[off:off + size] = 0.0
        else:
            fi, fo = shape
            var = 2.0 / (fi + fo) if scheme == "glorot_normal" else 2.0 / fi
            data[off:off + size] = rng.normal(0.0, np.sqrt(var), size)
    return ParameterVector(data, spec)


# -- graph construction ----------------------------------------------------


@dataclass
class EvalResult:
    """Per-head raw outputs, optionally with scaled-input derivative channels.

    Derivative entries exist only for heads that actually consume the input:
    d_r / d_rr carry the concentration heads, d_t carries all four.
    """

    values: dict
    d_t: dict = field(default_factory=dict)
    d_r: dict = field(default_factory=dict)
    d_rr: dict = field(default_factory=dict)


def _act(x):
    return ad.jet_activation(x, "tanh")


def _affine(x, params, name):
    return ad.jet_affine(x, params[f"{name}.W"], params[f"{name}.b"])


def _branch(x, params, prefix, spec: NetworkSpec, one_k):
    kind = spec.block_kind
    if kind == "dense":
        h = x
        for i in range(spec.branch_layers):
            h = _act(_affine(h, params, f"{prefix}.{i}"))
    elif kind == "residual":
        n_blocks = spec.residual_blocks
        lead = spec.branch_layers - 2 * n_blocks
        h = x
        for i in range(lead):
            h = _act(_affine(h, params, f"{prefix}.lead{i}"))
        for k in range(n_blocks):
            f = _act(_affine(h, params, f"{prefix}.block{k}.0"))
            f = _act(_affine(f, params, f"{prefix}.block{k}.1"))
            h = h + f
    else:
        u = _act(_affine(x, params, f"{prefix}.u"))
        v = _act(_affine(x, params, f"{prefix}.v"))
        h = _act(_affine(x, params, f"{prefix}.h"))
        for k in range(spec.gp_blocks - 1):
            z = _act(_affine(h, params, f"{prefix}.z{k}"))
            h = ad.jet_mul(one_k - z, u) + ad.jet_mul(z, v)
    return _affine(h, params, f"{prefix}.out")


def _input_jets(spec: NetworkSpec, t_hat, r_hat, deriv: str):
    """Leaf jets for the scaled inputs under the requested channel layout.

    deriv: "none" -> [val]; "t" -> [val, d/dt]; "r" -> [val, d/dr];
    "full" -> [val, d/dt, d/dr, d2/dr2].
    """
    dt_ = spec.dtype
    t = np.asarray(t_hat, dtype=dt_).reshape(-1, 1)
    n = t.shape[0]
    r = None if r_hat is None else np.asarray(r_hat, dtype=dt_).reshape(-1, 1)
    if r is not None and r.shape[0] != n:
        raise ShapeMismatch("t and r batches differ in length")
    zeros = np.zeros((n, 1), dtype=dt_)
    ones = np.ones((n, 1), dtype=dt_)
    if deriv == "none":
        t_ch, r_ch = [t], [r]
    elif deriv == "t":
        t_ch, r_ch = [t, ones], [r, zeros]
    elif deriv == "r":
        t_ch, r_ch = [t, zeros], [r, ones]
    elif deriv == "full":
        t_ch, r_ch = [t, ones, zeros, zeros], [r, zeros, ones, zeros]
    else:
        raise ConfigError(f"unknown deriv mode {deriv!r}")
    t_jet = ad.jet_input(np.stack(t_ch), dt_)
    r_jet = None if r is None else ad.jet_input(np.stack(r_ch), dt_)
    return t_jet, r_jet


def build_heads(spec: NetworkSpec, params: dict, t_hat, r_hat, deriv: str = "none",
                heads=HEADS) -> dict:
    """Head jets (k, N, 1) for one point batch; params maps tensor name -> Var.

    Different point batches may be wired against the same param Vars; backward
    then accumulates across all graphs naturally.
    """
    conc_deriv = deriv
    pot_deriv = "t" if deriv in ("t", "full") else "none"
    want_conc = any(h in CONC_HEADS for h in heads)
    want_pot = any(h in POT_HEADS for h in heads)
    k_conc = {"none": 1, "t": 2, "r": 2, "full": 4}[conc_deriv]
    dt_ = spec.dtype
    one = np.zeros((k_conc, 1, 1), dtype=dt_)
    one[0] = 1.0
    one_conc = ad.constant(one)
    one_pot = ad.constant(one[:1 if pot_deriv == "none" else 2])

    out = {}
    if spec.architecture == "merged":
        # potentials ride on the t-trunk; conc heads get trunk features + r
        t_jet_c, r_jet = _input_jets(spec, t_hat, r_hat, conc_deriv)
        if want_pot:
            t_jet_p, _ = _input_jets(spec, t_hat, None, pot_deriv)
        feat_cache = {}

        def t_features(jet):
            key = id(jet)
            if key not in feat_cache:
                h = jet
                for i in range(spec.merged_trunk_layers):
                    h = _act(_affine(h, params, f"trunk_t.{i}"))
                feat_cache[key] = h
            return feat_cache[key]

        if want_conc:
            if r_jet is None:
                raise ShapeMismatch("concentration heads need r inputs")
            h = ad.jet_concat(t_features(t_jet_c), r_jet)
            for i in range(spec.merged_trunk_layers):
                h = _act(_affine(h, params, f"trunk_r.{i}"))
            for head in CONC_HEADS:
                if head in heads:
                    raw = _branch(h, params, f"branch.{head}", spec, one_conc)
                    out[head] = ad.jet_activation(raw, "sigmoid")
        if want_pot:
            feat = t_features(t_jet_p)
            for head in POT_HEADS:
                if head in heads:
                    out[head] = _branch(feat, params, f"branch.{head}", spec, one_pot)
    else:
        if want_conc:
            t_jet, r_jet = _input_jets(spec, t_hat, r_hat, conc_deriv)
            if r_jet is None:
                raise ShapeMismatch("concentration heads need r inputs")
            x = ad.jet_concat(t_jet, r_jet)
            for head in CONC_HEADS:
                if head in heads:
                    raw = _branch(x, params, f"branch.{head}", spec, one_conc)
                    out[head] = ad.jet_activation(raw, "sigmoid")
        if want_pot:
            t_jet, _ = _input_jets(spec, t_hat, None, pot_deriv)
            for head in POT_HEADS:
                if head in heads:
                    out[head] = _branch(t_jet, params, f"branch.{head}", spec, one_pot)
    return out


def _const_params(pv: ParameterVector) -> dict:
    return {nm: ad.constant(arr) for nm, arr in pv.unpack().items()}


def param_vars(pv: ParameterVector) -> tuple[dict, list]:
    """Leaf Vars for every trainable tensor plus the ordered leaf list."""
    leaves = {nm: ad.Var(arr) for nm, arr in pv.unpack().items()}
    ordered = [leaves[nm] for nm, _, _ in layout(pv.spec)]
    return leaves, ordered


def pack_gradients(grads: list, spec: NetworkSpec) -> np.ndarray:
    flat = np.empty(param_count(spec), dtype=DTYPES[spec.precision])
    for (nm, shape, off), g in zip(layout(spec), grads):
        flat[off:off + int(np.prod(shape))] = np.asarray(g).ravel()
    return flat


def graph_eval_result(jets: dict, deriv: str) -> EvalResult:
    """EvalResult of plain (N, 1) graph Vars from build_heads output channels."""
    er = EvalResult(values={h: ad.jet_channel(j, 0) for h, j in jets.items()})
    if deriv == "none":
        return er
    for h, jet in jets.items():
        if deriv == "r":
            if h in CONC_HEADS:
                er.d_r[h] = ad.jet_channel(jet, 1)
        elif deriv == "t":
            er.d_t[h] = ad.jet_channel(jet, 1)
        elif deriv == "full":
            er.d_t[h] = ad.jet_channel(jet, 1)
            if h in CONC_HEADS:
                er.d_r[h] = ad.jet_channel(jet, 2)
                er.d_rr[h] = ad.jet_channel(jet, 3)
        else:
            raise ConfigError(f"unknown deriv mode {deriv!r}")
    return er


def forward(spec: NetworkSpec, pv: ParameterVector, t_hat, r_hat=None) -> EvalResult:
    """Head values on a scaled input batch."""
    heads = HEADS if r_hat is not None else POT_HEADS
    jets = build_heads(spec, _const_params(pv), t_hat, r_hat, deriv="none", heads=heads)
    return EvalResult(values={h: jets[h].value[0, :, 0] for h in jets})


def forward_with_input_derivatives(spec: NetworkSpec, pv: ParameterVector,
                                   t_hat, r_hat) -> EvalResult:
    """Head values plus exact d/dt for all heads and d/dr, d2/dr2 for conc heads."""
    jets = build_heads(spec, _const_params(pv), t_hat, r_hat, deriv="full", heads=HEADS)
    res = EvalResult(values={h: jets[h].value[0, :, 0] for h in jets})
    for h in CONC_HEADS:
        res.d_t[h] = jets[h].value[1, :, 0]
        res.d_r[h] = jets[h].value[2, :, 0]
        res.d_rr[h] = jets[h].value[3, :, 0]
    for h in POT_HEADS:
        res.d_t[h] = jets[h].value[1, :, 0]
    return res


def loss_gradient(spec: NetworkSpec, pv: ParameterVector, closure, t_hat, r_hat):
    """(loss value, flat gradient) for a scalar closure over an EvalResult of graph nodes.

    The closure receives an EvalResult whose entries are graph Vars (shape
    (N, 1)) supporting arithmetic and the autodiff reductions, and must return
    a scalar Var; the gradient differentiates through every derivative channel
    the closure touches.
    """
    leaves, ordered = param_vars(pv)
    jets = build_heads(spec, leaves, t_hat, r_hat, deriv="full", heads=HEADS)
    root = closure(graph_eval_result(jets, "full"))
    grads = ad.backward(root, ordered)
    return float(root.value), pack_gradients(grads, spec)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, pv: ParameterVector, extra: dict | None = None):
    """Self-describing text checkpoint; weights in shortest round-trip decimal."""
    spec = pv.spec
    doc = {
        "format": "spmpinn-checkpoint-1",
        "spec": {
            "architecture": spec.architecture, "block_kind": spec.block_kind,
            "width": spec.width, "merged_trunk_layers": spec.merged_trunk_layers,
            "branch_layers": spec.branch_layers, "activation": spec.activation,
            "precision": spec.precision,
        },
        "param_count": param_count(spec),
        "weights": [float(x) for x in pv.data],
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """-> (ParameterVector, extra dict); bit-exact at 64-bit precision."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"checkpoint not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
        spec = NetworkSpec(**doc["spec"])
        data = np.array(doc["weights"], dtype=DTYPES[spec.precision])
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"corrupt checkpoint {path}: {exc}") from exc
    expected = param_count(spec)
    if doc.get("param_count") != expected or data.shape != (expected,):
        raise ArtifactError(f"corrupt checkpoint {path}: weight count does not "
                            f"match the declared spec ({expected} expected)")
    return ParameterVector(data, spec), doc.get("extra", {})
