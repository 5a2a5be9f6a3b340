"""Differentiable components: encoder, decoder, heads, discriminator.

All parameters are initialized from a numpy generator keyed by
(seed, parameter name), so two bundles built with the same constructor
arguments are bitwise identical regardless of torch's global RNG state.

Width conventions, relative to the feature width d = 2 * hidden:
  translator     d -> d                 (single affine map)
  classifier     d -> d//4 -> C         (rectifier between)
  aggregator     d -> d//4 -> d//16 -> 1
  discriminator  d -> d//2 -> d//4 -> d//16 -> 1  (leaky rectifier, slope 0.2)
Intermediate widths are floored at 1 so toy-sized bundles stay valid.
"""

from __future__ import annotations

import json
import math

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError, ContractError, NumericError
from .seeding import derive_seed

CHECKPOINT_FORMAT_VERSION = 1
LOGIT_CLAMP = 30.0


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n))
    q, r = np.linalg.qr(a)
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    return q * sign


class ModelBundle(nn.Module):
    """Encoder, inpainting decoder, translation layer, classifier,
    neighbor-attention perceptron and domain discriminator in one module.

    The encoder is a 3-layer bidirectional recurrent network; a sequence is
    summarized as the concatenation of the top layer's final forward and
    backward hidden states, giving features of width d = 2 * hidden.
    """

    def __init__(self, joints: int, classes: int, hidden: int = 512, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if joints < 1 or classes < 2 or hidden < 2:
            raise ContractError("need joints >= 1, classes >= 2, hidden >= 2")
        self.joints = joints
        self.classes = classes
        self.hidden = hidden
        self.d = 2 * hidden
        self.seed = seed

        in_width = joints * 3
        d = self.d
        q = max(d // 4, 1)
        s = max(d // 16, 1)
        self.encoder = nn.GRU(in_width, hidden, num_layers=3, batch_first=True,
                              bidirectional=True)
        self.decoder_rnn = nn.GRU(in_width, hidden, num_layers=2, batch_first=True)
        self.decoder_init = nn.Linear(d, 2 * hidden)
        self.decoder_readout = nn.Linear(hidden, in_width)
        self.translator = nn.Linear(d, d)
        self.classifier = nn.Sequential(
            nn.Linear(d, q), nn.ReLU(), nn.Linear(q, classes)
        )
        self.aggregator = nn.Sequential(
            nn.Linear(d, q), nn.ReLU(), nn.Linear(q, s), nn.ReLU(), nn.Linear(s, 1)
        )
        self.discriminator = nn.Sequential(
            nn.Linear(d, max(d // 2, 1)), nn.LeakyReLU(0.2),
            nn.Linear(max(d // 2, 1), q), nn.LeakyReLU(0.2),
            nn.Linear(q, s), nn.LeakyReLU(0.2),
            nn.Linear(s, 1),
        )
        self.to(dtype)
        self._init_parameters()

    @property
    def dtype(self) -> torch.dtype:
        return self.translator.weight.dtype

    def _init_parameters(self) -> None:
        with torch.no_grad():
            for name, param in self.named_parameters():
                rng = np.random.default_rng(derive_seed(self.seed, name))
                if "bias" in name:
                    values = np.zeros(param.shape)
                elif "weight_hh" in name:
                    # one orthogonal block per recurrent gate
                    n = param.shape[1]
                    values = np.concatenate([_orthogonal(rng, n) for _ in range(3)])
                else:
                    bound = 1.0 / math.sqrt(param.shape[-1])
                    values = rng.uniform(-bound, bound, size=param.shape)
                param.copy_(torch.from_numpy(np.ascontiguousarray(values)).to(param.dtype))

    # -- forward maps -------------------------------------------------------

    def _as_tensor(self, x) -> torch.Tensor:
        if isinstance(x, torch.Tensor):
            return x if x.dtype == self.dtype else x.to(self.dtype)
        return torch.as_tensor(np.asarray(x), dtype=self.dtype)

    def _check(self, value: torch.Tensor, component: str) -> torch.Tensor:
        if not torch.isfinite(value).all():
            raise NumericError(f"{component}: non-finite activations")
        return value

    def _frames_to_steps(self, x: torch.Tensor, op: str) -> tuple[torch.Tensor, bool]:
        single = x.dim() == 3
        if single:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[2] != self.joints or x.shape[3] != 3:
            raise ContractError(f"{op}: expected frames shaped (T, {self.joints}, 3), got {tuple(x.shape)}")
        if not torch.isfinite(x).all():
            raise ContractError(f"{op}: non-finite input frames")
        return x.reshape(x.shape[0], x.shape[1], self.joints * 3), single

    def encode(self, x) -> torch.Tensor:
        """Sequence (T, J, 3) or batch (B, T, J, 3) -> features of width d."""
        steps, single = self._frames_to_steps(self._as_tensor(x), "encode")
        _, h_n = self.encoder(steps)
        features = torch.cat([h_n[-2], h_n[-1]], dim=1)
        self._check(features, "encoder")
        return features.squeeze(0) if single else features

    def decode(self, h, masked) -> torch.Tensor:
        """Reconstruct a full sequence from features of the masked sequence.

        The features set the recurrent state through an affine map; the
        masked frames are fed as step inputs so unmasked spans can be copied.
        """
        h = self._as_tensor(h)
        steps, single_frames = self._frames_to_steps(self._as_tensor(masked), "decode")
        single = h.dim() == 1
        if single != single_frames:
            raise ContractError("decode: features and masked frames disagree on batching")
        if single:
            h = h.unsqueeze(0)
        if h.shape[-1] != self.d:
            raise ContractError(f"decode: expected features of width {self.d}")
        state = self.decoder_init(h).reshape(-1, 2, self.hidden).transpose(0, 1).contiguous()
        out, _ = self.decoder_rnn(steps, state)
        recon = self.decoder_readout(out).reshape(-1, steps.shape[1], self.joints, 3)
        self._check(recon, "decoder")
        return recon.squeeze(0) if single else recon

    def translate(self, h) -> torch.Tensor:
        out = self.translator(self._as_tensor(h))
        return self._check(out, "translator")

    def classify(self, h_bar) -> torch.Tensor:
        """Class probabilities (softmax of clamped logits)."""
        logits = self.classifier(self._as_tensor(h_bar))
        logits = torch.clamp(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
        return self._check(torch.softmax(logits, dim=-1), "classifier")

    def discriminate(self, h_bar) -> torch.Tensor:
        """Probability that a feature comes from the labeled pool, in (0, 1)."""
        logit = self.discriminator(self._as_tensor(h_bar)).squeeze(-1)
        logit = torch.clamp(logit, -LOGIT_CLAMP, LOGIT_CLAMP)
        return self._check(torch.sigmoid(logit), "discriminator")

    def aggregate_score(self, diff) -> torch.Tensor:
        """Raw attention score for one |anchor - neighbor| difference."""
        out = self.aggregator(self._as_tensor(diff)).squeeze(-1)
        return self._check(out, "aggregator")

    # -- optimizer parameter groups -----------------------------------------

    def discriminator_parameters(self):
        return list(self.discriminator.parameters())

    def model_parameters(self):
        """Everything except the discriminator."""
        skip = {id(p) for p in self.discriminator.parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def layer_widths(self) -> dict:
        d, q, s = self.d, max(self.d // 4, 1), max(self.d // 16, 1)
        return {
            "encoder_hidden": self.hidden,
            "decoder_hidden": self.hidden,
            "translator": [d, d],
            "classifier": [d, q, self.classes],
            "aggregator": [d, q, s, 1],
            "discriminator": [d, max(d // 2, 1), q, s, 1],
        }


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def _npz_path(path) -> str:
    path = str(path)
    return path if path.endswith(".npz") else path + ".npz"


def save_checkpoint(bundle: ModelBundle, path, frames: int | None = None) -> str:
    """Write parameters to an .npz archive plus a JSON sidecar at <archive>.json."""
    path = _npz_path(path)
    arrays = {name: param.detach().cpu().numpy() for name, param in bundle.state_dict().items()}
    np.savez(path, **arrays)
    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "d": bundle.d,
        "classes": bundle.classes,
        "joints": bundle.joints,
        "frames": frames,
        "hidden": bundle.hidden,
        "dtype": str(bundle.dtype).removeprefix("torch."),
        "layer_widths": bundle.layer_widths(),
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return path


def load_checkpoint(path) -> tuple[ModelBundle, dict]:
    """Rebuild a bundle from an archive written by save_checkpoint."""
    path = _npz_path(path)
    try:
        with open(path + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing sidecar {path}.json") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt sidecar {path}.json") from exc
    if sidecar.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {sidecar.get('format_version')!r}")
    for key in ("classes", "joints", "hidden"):
        if not isinstance(sidecar.get(key), int):
            raise CheckpointError(f"sidecar field {key!r} missing or not an integer")

    dtype = getattr(torch, sidecar.get("dtype", "float32"), None)
    if not isinstance(dtype, torch.dtype):
        raise CheckpointError(f"unknown dtype {sidecar.get('dtype')!r}")
    bundle = ModelBundle(sidecar["joints"], sidecar["classes"], sidecar["hidden"], dtype=dtype)

    with np.load(path) as archive:
        stored = {name: archive[name] for name in archive.files}
    expected = bundle.state_dict()
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise CheckpointError(f"parameter name mismatch (missing {missing}, extra {extra})")
    with torch.no_grad():
        for name, param in expected.items():
            values = stored[name]
            if tuple(values.shape) != tuple(param.shape):
                raise CheckpointError(
                    f"{name}: shape {values.shape} does not match {tuple(param.shape)}"
                )
            if not np.isfinite(values).all():
                raise CheckpointError(f"{name}: non-finite parameter values")
            param.copy_(torch.from_numpy(values).to(param.dtype))
    bundle.load_state_dict(expected)
    return bundle, sidecar
