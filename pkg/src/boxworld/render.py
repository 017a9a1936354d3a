"""Egocentric software rasterizer.

Boxes only: floors, walls (door spans carved), and object boxes, flat-shaded
with a fixed per-face-normal brightness (no scene lights), z-buffered, with a
per-pixel instance buffer.  Visibility is *defined* by an instance-only
low-resolution render, so what a policy is told it can see and what a frame
shows can never disagree.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import scene as scene_mod
from .assets import default_catalog
from .defaults import (EYE_HEIGHT, VISIBILITY_MAX_DIST, VISIBILITY_RES,
                       WALL_HEIGHT, WALL_THICKNESS)
from .geometry import Vec3

BACKGROUND = -1
WALL = -2
FLOOR = -3

WALL_COLOR = (205, 205, 210)
FLOOR_COLOR = (172, 166, 154)

_LIGHT = (0.4014, 0.7527, 0.5218)  # fixed unit direction for face brightness
_AMBIENT = 0.35


@dataclass(frozen=True)
class CameraConfig:
    width: int = 256
    height: int = 256
    horizontal_fov: float = 90.0
    eye_height: float = EYE_HEIGHT
    near: float = 0.05
    far: float = 50.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("camera must be at least 16x16")
        if not 30.0 <= self.horizontal_fov <= 120.0:
            raise ValueError("horizontal_fov must be within [30, 120]")


@dataclass(eq=False)
class Frame:
    rgb: np.ndarray       # (height, width, 3) uint8
    instance: np.ndarray  # (height, width) int32


def _brightness(normal) -> float:
    lit = max(0.0, normal[0] * _LIGHT[0] + normal[1] * _LIGHT[1] + normal[2] * _LIGHT[2])
    return _AMBIENT + (1.0 - _AMBIENT) * lit


def _box_faces(center, half, yaw_deg):
    """Six outward-wound quads of a yaw-rotated box: (corners(4,3), normal)."""
    cx, cy, cz = center
    hx, hy, hz = half
    r = math.radians(yaw_deg)
    c, s = math.cos(r), math.sin(r)

    def world(lx, ly, lz):
        return (cx + lx * c + lz * s, cy + ly, cz - lx * s + lz * c)

    axes = [((1, 0, 0), (c, 0.0, -s)), ((-1, 0, 0), (-c, 0.0, s)),
            ((0, 1, 0), (0.0, 1.0, 0.0)), ((0, -1, 0), (0.0, -1.0, 0.0)),
            ((0, 0, 1), (s, 0.0, c)), ((0, 0, -1), (-s, 0.0, -c))]
    faces = []
    for (ax, ay, az), normal in axes:
        # two local directions spanning the face
        if ax != 0:
            quad = [(ax * hx, -hy, -hz), (ax * hx, -hy, hz),
                    (ax * hx, hy, hz), (ax * hx, hy, -hz)]
        elif ay != 0:
            quad = [(-hx, ay * hy, -hz), (hx, ay * hy, -hz),
                    (hx, ay * hy, hz), (-hx, ay * hy, hz)]
        else:
            quad = [(-hx, -hy, az * hz), (hx, -hy, az * hz),
                    (hx, hy, az * hz), (-hx, hy, az * hz)]
        corners = [world(*p) for p in quad]
        # enforce outward winding: flip if the computed normal opposes
        e1 = np.subtract(corners[1], corners[0])
        e2 = np.subtract(corners[2], corners[0])
        n = np.cross(e1, e2)
        if float(np.dot(n, normal)) < 0.0:
            corners = corners[::-1]
        faces.append((corners, normal))
    return faces


def _shade(color, normal):
    b = _brightness(normal)
    return (min(255, int(color[0] * b)), min(255, int(color[1] * b)),
            min(255, int(color[2] * b)))


def _gather_triangles(state):
    """World-space triangle soup for the current state."""
    verts = []
    colors = []
    instance_ids = []

    def add_quad(corners, color, instance_id):
        a, b, c, d = corners
        verts.append((a, b, c))
        verts.append((a, c, d))
        colors.append(color)
        colors.append(color)
        instance_ids.append(instance_id)
        instance_ids.append(instance_id)

    floor_shaded = _shade(FLOOR_COLOR, (0.0, 1.0, 0.0))
    for room in state.scene.rooms:
        x0, z0, x1, z1 = room.bounds
        add_quad([(x0, 0.0, z0), (x0, 0.0, z1), (x1, 0.0, z1), (x1, 0.0, z0)],
                 floor_shaded, FLOOR)

    half_t = WALL_THICKNESS / 2
    for ax, az, bx, bz in scene_mod.wall_segments(state.scene):
        cx, cz = (ax + bx) / 2, (az + bz) / 2
        if abs(bx - ax) < abs(bz - az):  # runs along z
            half = (half_t, WALL_HEIGHT / 2, abs(bz - az) / 2)
        else:
            half = (abs(bx - ax) / 2, WALL_HEIGHT / 2, half_t)
        for corners, normal in _box_faces((cx, WALL_HEIGHT / 2, cz), half, 0.0):
            add_quad(corners, _shade(WALL_COLOR, normal), WALL)

    catalog = state.catalog
    for obj in state.scene.objects:
        spec = catalog.get(obj.asset)
        he = spec.half_extents
        for corners, normal in _box_faces(tuple(obj.position), (he.x, he.y, he.z),
                                          obj.yaw):
            add_quad(corners, _shade(spec.color, normal), obj.id)

    return (np.asarray(verts, dtype=np.float64),
            np.asarray(colors, dtype=np.uint8),
            np.asarray(instance_ids, dtype=np.int32))


def _camera_basis(agent):
    yaw = math.radians(agent.yaw)
    pitch = math.radians(agent.pitch)
    forward = np.array([math.sin(yaw) * math.cos(pitch), math.sin(pitch),
                        math.cos(yaw) * math.cos(pitch)])
    right = np.array([math.cos(yaw), 0.0, -math.sin(yaw)])
    up = np.cross(forward, right)
    return right, up, forward


def _clip_near(tri, near):
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near."""
    out = []
    poly = list(tri)
    clipped = []
    for i, cur in enumerate(poly):
        prev = poly[i - 1]
        cur_in = cur[2] >= near
        prev_in = prev[2] >= near
        if cur_in != prev_in:
            t = (near - prev[2]) / (cur[2] - prev[2])
            clipped.append(prev + t * (cur - prev))
        if cur_in:
            clipped.append(cur)
    if len(clipped) >= 3:
        for k in range(1, len(clipped) - 1):
            out.append((clipped[0], clipped[k], clipped[k + 1]))
    return out


def render_egocentric(state, cam: CameraConfig | None = None,
                      rgb_needed: bool = True) -> Frame:
    """Render the agent's current view.  Deterministic function of the state."""
    cam = cam or state.camera or CameraConfig()
    width, height = cam.width, cam.height
    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    instance = np.full((height, width), BACKGROUND, dtype=np.int32)
    zbuf = np.zeros((height, width), dtype=np.float64)  # stores 1/z; 0 = infinitely far

    verts, colors, instance_ids = _gather_triangles(state)
    if len(verts) == 0:
        return Frame(rgb=rgb, instance=instance)

    agent = state.agent
    eye = np.array([agent.position.x, agent.position.y + cam.eye_height,
                    agent.position.z])
    right, up, forward = _camera_basis(agent)
    basis = np.stack([right, up, forward], axis=1)  # world -> camera via dot

    cam_verts = (verts.reshape(-1, 3) - eye) @ basis
    cam_verts = cam_verts.reshape(-1, 3, 3)

    # backface cull (camera space): keep faces whose normal points at the eye
    e1 = cam_verts[:, 1] - cam_verts[:, 0]
    e2 = cam_verts[:, 2] - cam_verts[:, 0]
    normals = np.cross(e1, e2)
    facing = np.einsum("ij,ij->i", normals, cam_verts[:, 0])
    keep = facing < 0.0
    # quick frustum reject: all three vertices behind near
    keep &= ~np.all(cam_verts[:, :, 2] < cam.near, axis=1)
    cam_verts = cam_verts[keep]
    colors = colors[keep]
    instance_ids = instance_ids[keep]

    half_w = math.tan(math.radians(cam.horizontal_fov) / 2)
    half_h = half_w * height / width
    min_w = 1.0 / cam.far

    for tri_idx in range(len(cam_verts)):
        tri = cam_verts[tri_idx]
        if np.all(tri[:, 2] >= cam.near):
            pieces = [tri]
        else:
            pieces = _clip_near(tri, cam.near)
        for piece in pieces:
            piece = np.asarray(piece)
            z = piece[:, 2]
            w = 1.0 / z
            px = (piece[:, 0] * w / half_w + 1.0) * 0.5 * width
            py = (1.0 - piece[:, 1] * w / half_h) * 0.5 * height
            _raster_triangle(px, py, w, colors[tri_idx], int(instance_ids[tri_idx]),
                             rgb, instance, zbuf, min_w, rgb_needed)
    return Frame(rgb=rgb, instance=instance)


def _raster_triangle(px, py, w, color, instance_id, rgb, instance, zbuf,
                     min_w, rgb_needed):
    height, width = instance.shape
    min_x = max(0, int(math.floor(px.min())))
    max_x = min(width - 1, int(math.ceil(px.max())))
    min_y = max(0, int(math.floor(py.min())))
    max_y = min(height - 1, int(math.ceil(py.max())))
    if min_x > max_x or min_y > max_y:
        return
    x0, x1, x2 = px
    y0, y1, y2 = py
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area == 0.0:
        return
    xs = np.arange(min_x, max_x + 1, dtype=np.float64) + 0.5
    ys = np.arange(min_y, max_y + 1, dtype=np.float64) + 0.5
    X = xs[None, :]
    Y = ys[:, None]
    e0 = (x2 - x1) * (Y - y1) - (y2 - y1) * (X - x1)
    e1 = (x0 - x2) * (Y - y2) - (y0 - y2) * (X - x2)
    e2 = (x1 - x0) * (Y - y0) - (y1 - y0) * (X - x0)
    if area > 0.0:
        inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
    else:
        inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
    if not inside.any():
        return
    inv_area = 1.0 / area
    w_pix = (e0 * w[0] + e1 * w[1] + e2 * w[2]) * inv_area
    block = zbuf[min_y:max_y + 1, min_x:max_x + 1]
    mask = inside & (w_pix > block) & (w_pix >= min_w)
    if not mask.any():
        return
    block[mask] = w_pix[mask]
    instance[min_y:max_y + 1, min_x:max_x + 1][mask] = instance_id
    if rgb_needed:
        rgb_block = rgb[min_y:max_y + 1, min_x:max_x + 1]
        rgb_block[mask] = color


def visible(state, object_id: int, cam: CameraConfig | None = None) -> bool:
    """True iff the object shows at least one pixel in a low-res instance
    render from the current pose and is within 10 m of the eye."""
    obj = state.scene.object_by_id(object_id)  # raises KeyError for unknown ids
    cam = cam or state.camera or CameraConfig()
    eye = Vec3(state.agent.position.x, state.agent.position.y + cam.eye_height,
               state.agent.position.z)
    if (obj.position - eye).length() > VISIBILITY_MAX_DIST:
        return False
    probe = CameraConfig(width=VISIBILITY_RES, height=VISIBILITY_RES,
                         horizontal_fov=cam.horizontal_fov, eye_height=cam.eye_height,
                         near=cam.near, far=cam.far)
    frame = render_egocentric(state, probe, rgb_needed=False)
    return bool((frame.instance == object_id).any())


# --- PNG encoding ------------------------------------------------------------------

def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def _encode_png(raw_rows: bytes, width: int, height: int, bit_depth: int,
                color_type: int) -> bytes:
    header = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    # fixed compression level => reproducible bytes
    idat = zlib.compress(raw_rows, 6)
    return (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", header)
            + _png_chunk(b"IDAT", idat) + _png_chunk(b"IEND", b""))


def encode_png(frame: Frame) -> bytes:
    """Lossless 8-bit RGB PNG with fixed encoder settings."""
    height, width, _ = frame.rgb.shape
    rows = bytearray()
    for y in range(height):
        rows.append(0)  # filter type 0
        rows.extend(frame.rgb[y].tobytes())
    return _encode_png(bytes(rows), width, height, 8, 2)


def encode_instance_png16(frame: Frame) -> bytes:
    """Debug export: instance ids as 16-bit grayscale, offset so sentinels fit."""
    height, width = frame.instance.shape
    shifted = (frame.instance.astype(np.int32) + 8).clip(0, 65535).astype(">u2")
    rows = bytearray()
    for y in range(height):
        rows.append(0)
        rows.extend(shifted[y].tobytes())
    return _encode_png(bytes(rows), width, height, 16, 0)


def decode_png_rgb(data: bytes) -> np.ndarray:
    """Minimal decoder for PNGs produced by encode_png (filter 0 only)."""
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG")
    pos = 8
    width = height = None
    idat = b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        payload = data[pos + 8:pos + 8 + length]
        if tag == b"IHDR":
            width, height, bit_depth, color_type = struct.unpack(">IIBB", payload[:10])
            if bit_depth != 8 or color_type != 2:
                raise ValueError("decoder only handles 8-bit RGB")
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    raw = zlib.decompress(idat)
    stride = width * 3 + 1
    out = np.empty((height, width, 3), dtype=np.uint8)
    for y in range(height):
        row = raw[y * stride:(y + 1) * stride]
        if row[0] != 0:
            raise ValueError("decoder only handles filter 0")
        out[y] = np.frombuffer(row[1:], dtype=np.uint8).reshape(width, 3)
    return out
