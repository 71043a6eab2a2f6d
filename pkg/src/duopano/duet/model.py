"""Toy dual-branch denoiser coupled by EPPA.

One small UNet trunk is shared by the panorama and perspective branches.
Each branch owns 1x1 adapters (zero-initialised residuals) after every block.
The panorama branch circularly pads every convolution input horizontally and
zero-pads vertically; views zero-pad both ways.

Layout (``c`` channels, panorama ``h x 2h``, views ``h/2``)::

    stem 3x3                      level 0
    down1 (stride 2) -> res1      level 1
    down2 (stride 2) -> [EPPA]    level 2
    mid res -> [EPPA]
    up res (+skip) -> [EPPA] -> up1
    up res (+skip) -> [EPPA?] -> up2   level 1 -> 0
    add stem skip -> norm/SiLU -> out 3x3

EPPA sites listed in ``ToyConfig.eppa_sites``; the level-1 site before the
last upsampler is off by default because of its single-core cost.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..eppa import EppaSite, build_attention_masks, build_spe_maps, SpeConfig
from ..errors import ShapeError, TrainingError
from ..resample import circular_pad
from ..sphere import CameraRig, ErpGrid, icosahedron_rig

ALL_SITES = ("down1", "down2", "mid", "up1", "up2")


@dataclass(frozen=True)
class ToyConfig:
    height: int = 64
    channels: int = 32
    n_classes: int = 8
    fov: float = 90.0
    sigma: float = 1.0
    eppa_sites: tuple[str, ...] = ("down2", "mid", "up1")
    use_spe: bool = True
    use_mask: bool = True
    image_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "eppa_sites", tuple(self.eppa_sites))
        unknown = set(self.eppa_sites) - set(ALL_SITES)
        if unknown:
            raise ShapeError(f"unknown EPPA sites {sorted(unknown)}")
        if self.height % 16:
            raise ShapeError("toy height must be divisible by 16")

    @property
    def grid(self) -> ErpGrid:
        return ErpGrid(self.height)

    @property
    def view_size(self) -> int:
        return self.height // 2

    def site_level(self, site: str) -> int:
        return {"down1": 1, "down2": 2, "mid": 2, "up1": 2, "up2": 1}[site]

    def to_dict(self) -> dict:
        return asdict(self)


def pano_pad(x):
    return F.pad(circular_pad(x, 1), (0, 0, 1, 1))


def view_pad(x):
    return F.pad(x, (1, 1, 1, 1))


def timestep_embedding(t: int, dim: int, dtype) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = float(t) * freqs
    return torch.cat([torch.sin(ang), torch.cos(ang)]).to(dtype)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3)
        self.emb = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(8, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb, pad):
        h = self.conv1(pad(F.silu(self.norm1(x)))) + self.emb(emb)[:, None, None]
        h = self.conv2(pad(F.silu(self.norm2(h))))
        return self.skip(x) + h


class Trunk(nn.Module):
    """Weights shared by both branches."""

    def __init__(self, c: int, emb_dim: int, image_channels: int):
        super().__init__()
        self.stem = nn.Conv2d(image_channels, c, 3)
        self.down1 = nn.Conv2d(c, c, 3, stride=2)
        self.res1 = ResBlock(c, c, emb_dim)
        self.down2 = nn.Conv2d(c, c, 3, stride=2)
        self.mid = ResBlock(c, c, emb_dim)
        self.upres2 = ResBlock(2 * c, c, emb_dim)
        self.up1 = nn.Conv2d(c, c, 3)
        self.upres1 = ResBlock(2 * c, c, emb_dim)
        self.up2 = nn.Conv2d(c, c, 3)
        self.out_norm = nn.GroupNorm(8, c)
        self.out = nn.Conv2d(c, image_channels, 3)


class Adapters(nn.Module):
    """Branch-exclusive 1x1 residual adapters, zero at initialisation."""

    NAMES = ("stem", "res1", "mid", "upres2", "upres1")

    def __init__(self, c: int):
        super().__init__()
        self.layers = nn.ModuleDict({n: nn.Conv2d(c, c, 1) for n in self.NAMES})
        for layer in self.layers.values():
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, name, x):
        return x + self.layers[name](x)


@dataclass
class SiteGeometry:
    pano_spe: torch.Tensor
    view_spe: torch.Tensor
    mask: torch.Tensor


class ToyDenoiser(nn.Module):
    def __init__(self, config: ToyConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config = config or ToyConfig()
        gen_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        c = config.channels
        emb_dim = c
        self.time_mlp = nn.Sequential(nn.Linear(c, 2 * c), nn.SiLU(), nn.Linear(2 * c, emb_dim))
        self.cond = nn.Embedding(config.n_classes, emb_dim)
        self.trunk = Trunk(c, emb_dim, config.image_channels)
        self.pano_adapters = Adapters(c)
        self.view_adapters = Adapters(c)
        self.sites = nn.ModuleDict({s: EppaSite(c, config.sigma) for s in config.eppa_sites})
        torch.random.set_rng_state(gen_state)
        self.rig = icosahedron_rig(config.view_size, config.fov)
        self._geometry: dict = {}

    # geometry -----------------------------------------------------------
    def site_geometry(self, level: int, rig: CameraRig) -> SiteGeometry:
        key = (level, rig.key())
        hit = self._geometry.get(key)
        dtype = next(self.parameters()).dtype
        if hit is None or hit.mask.dtype != dtype:
            cfg = self.config
            feat = ErpGrid(cfg.height >> level)
            pano_spe, view_spe = build_spe_maps(SpeConfig(cfg.channels), feat, rig)
            mask = build_attention_masks(feat, rig, cfg.sigma).matrix
            if not cfg.use_spe:
                pano_spe, view_spe = np.zeros_like(pano_spe), np.zeros_like(view_spe)
            if not cfg.use_mask:
                mask = np.zeros_like(mask)
            hit = SiteGeometry(
                torch.as_tensor(pano_spe, dtype=dtype),
                torch.as_tensor(view_spe, dtype=dtype),
                torch.as_tensor(mask, dtype=dtype),
            )
            self._geometry[key] = hit
        return hit

    # forward --------------------------------------------------------------
    def embedding(self, t: int, y: int) -> torch.Tensor:
        dtype = next(self.parameters()).dtype
        temb = self.time_mlp(timestep_embedding(t, self.config.channels, dtype))
        return temb + self.cond.weight[int(y)]

    def forward(self, z_pano, z_views, t: int, y: int, rig: CameraRig | None = None, coupled: bool = True):
        """Predict noise for both branches in one synchronised pass.

        ``z_pano`` is (C, H, W) and ``z_views`` (N, C, H/2, H/2). With
        ``coupled=False`` the EPPA sites are skipped, giving two independent
        single-branch passes.
        """
        cfg = self.config
        rig = rig or self.rig
        C = cfg.image_channels
        if tuple(z_pano.shape) != (C, cfg.height, 2 * cfg.height):
            raise ShapeError(f"panorama latent has shape {tuple(z_pano.shape)}")
        if tuple(z_views.shape) != (len(rig), C, cfg.view_size, cfg.view_size):
            raise ShapeError(f"view latents have shape {tuple(z_views.shape)}")
        emb = self.embedding(t, y)
        T = self.trunk
        pa, va = self.pano_adapters, self.view_adapters

        def both(fn):
            return fn(p, pano_pad, pa), fn(v, view_pad, va)

        def site(name, p, v):
            if not coupled or name not in self.sites:
                return p, v
            g = self.site_geometry(cfg.site_level(name), rig)
            p2, v2 = self.sites[name](p[0], v, g.pano_spe, g.view_spe, g.mask)
            return p2[None], v2

        p, v = z_pano[None], z_views
        p, v = both(lambda x, pad, ad: ad("stem", T.stem(pad(x))))
        s0 = (p, v)
        p, v = both(lambda x, pad, ad: T.down1(pad(x)))
        p, v = site("down1", p, v)
        p, v = both(lambda x, pad, ad: ad("res1", T.res1(x, emb, pad)))
        s1 = (p, v)
        p, v = both(lambda x, pad, ad: T.down2(pad(x)))
        p, v = site("down2", p, v)
        s2 = (p, v)
        p, v = both(lambda x, pad, ad: ad("mid", T.mid(x, emb, pad)))
        p, v = site("mid", p, v)
        p, v = torch.cat([p, s2[0]], 1), torch.cat([v, s2[1]], 1)
        p, v = both(lambda x, pad, ad: ad("upres2", T.upres2(x, emb, pad)))
        p, v = site("up1", p, v)
        p, v = both(lambda x, pad, ad: T.up1(pad(F.interpolate(x, scale_factor=2, mode="nearest"))))
        p, v = torch.cat([p, s1[0]], 1), torch.cat([v, s1[1]], 1)
        p, v = both(lambda x, pad, ad: ad("upres1", T.upres1(x, emb, pad)))
        p, v = site("up2", p, v)
        p, v = both(lambda x, pad, ad: T.up2(pad(F.interpolate(x, scale_factor=2, mode="nearest"))))
        p, v = p + s0[0], v + s0[1]
        p, v = both(lambda x, pad, ad: T.out(pad(F.silu(T.out_norm(x)))))
        eps_pano, eps_views = p[0], v
        if not (torch.isfinite(eps_pano).all() and torch.isfinite(eps_views).all()):
            raise TrainingError(f"non-finite activations at t={t}, y={y}")
        return eps_pano, eps_views


def dual_forward(model: ToyDenoiser, z_pano, z_views, t: int, y: int, rig: CameraRig | None = None):
    """Numpy-or-tensor convenience wrapper around :meth:`ToyDenoiser.forward`."""
    dtype = next(model.parameters()).dtype
    zp = torch.as_tensor(np.asarray(z_pano) if not torch.is_tensor(z_pano) else z_pano, dtype=dtype)
    zv = z_views if torch.is_tensor(z_views) else torch.as_tensor(np.stack(z_views), dtype=dtype)
    return model(zp, zv.to(dtype), t, y, rig)
