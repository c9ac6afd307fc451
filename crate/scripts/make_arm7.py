#!/usr/bin/env python3
"""Regenerate the bundled 7-DOF test arm (URDF + OBJ link meshes).

Usage: python3 scripts/make_arm7.py crates/core/assets/arm7
"""
import math
import os
import sys

import numpy as np


def cylinder(p0, p1, radius, rings=10, segments=16, cap_rings=2):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    axis = axis / length
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    verts = []
    for i in range(rings + 1):
        c = p0 + axis * length * i / rings
        for k in range(segments):
            a = 2 * math.pi * k / segments
            verts.append(c + radius * (math.cos(a) * u + math.sin(a) * v))
    for c in (p0, p1):
        verts.append(c)
        for j in range(1, cap_rings):
            r = radius * j / cap_rings
            for k in range(segments // 2):
                a = 2 * math.pi * k / (segments // 2)
                verts.append(c + r * (math.cos(a) * u + math.sin(a) * v))
    return verts


def box(lo, hi, spacing=0.01):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    counts = [max(1, int(round((hi[d] - lo[d]) / spacing))) for d in range(3)]
    axes = [np.linspace(lo[d], hi[d], counts[d] + 1) for d in range(3)]
    verts = set()
    for ix, x in enumerate(axes[0]):
        for iy, y in enumerate(axes[1]):
            for iz, z in enumerate(axes[2]):
                on_face = (ix in (0, counts[0]) or iy in (0, counts[1]) or iz in (0, counts[2]))
                if on_face:
                    verts.add((round(x, 6), round(y, 6), round(z, 6)))
    return [np.array(v) for v in sorted(verts)]


def write_obj(path, verts):
    with open(path, "w") as f:
        f.write("# generated by scripts/make_arm7.py\n")
        for v in verts:
            f.write("v %.6f %.6f %.6f\n" % (v[0], v[1], v[2]))


LINKS = {
    "base_link": cylinder((0, 0, 0), (0, 0, 0.2), 0.07),
    "link1": cylinder((0, 0, -0.13), (0, 0, 0.0), 0.06),
    "link2": cylinder((0, 0, 0), (0, -0.316, 0), 0.06),
    "link3": cylinder((0, 0, -0.05), (0.0825, 0, 0), 0.055, rings=6),
    "link4": cylinder((0, 0, 0), (-0.0825, 0.384, 0), 0.055),
    "link5": cylinder((0, 0, -0.06), (0, 0, 0.04), 0.05, rings=6),
    "link6": cylinder((0, 0, 0), (0.088, 0, 0), 0.05, rings=6),
    "link7": cylinder((0, 0, 0), (0, 0, 0.107), 0.045, rings=6),
    "hand": box((-0.03, -0.1, 0.0), (0.03, 0.1, 0.05))
    + box((-0.01, 0.07, 0.05), (0.01, 0.09, 0.15))
    + box((-0.01, -0.09, 0.05), (0.01, -0.07, 0.15)),
}

HALF_PI = math.pi / 2
# name, parent, child, xyz, rpy, lower, upper, velocity
JOINTS = [
    ("joint1", "base_link", "link1", (0, 0, 0.333), (0, 0, 0), -2.8973, 2.8973, 2.175),
    ("joint2", "link1", "link2", (0, 0, 0), (-HALF_PI, 0, 0), -1.7628, 1.7628, 2.175),
    ("joint3", "link2", "link3", (0, -0.316, 0), (HALF_PI, 0, 0), -2.8973, 2.8973, 2.175),
    ("joint4", "link3", "link4", (0.0825, 0, 0), (HALF_PI, 0, 0), -3.0718, -0.0698, 2.175),
    ("joint5", "link4", "link5", (-0.0825, 0.384, 0), (-HALF_PI, 0, 0), -2.8973, 2.8973, 2.61),
    ("joint6", "link5", "link6", (0, 0, 0), (HALF_PI, 0, 0), -0.0175, 3.7525, 2.61),
    ("joint7", "link6", "link7", (0.088, 0, 0), (HALF_PI, 0, 0), -2.8973, 2.8973, 2.61),
]


def main(out):
    os.makedirs(os.path.join(out, "meshes"), exist_ok=True)
    for name, verts in LINKS.items():
        write_obj(os.path.join(out, "meshes", name + ".obj"), verts)
    lines = ['<?xml version="1.0"?>', '<robot name="arm7">']
    for name in ["base_link", "link1", "link2", "link3", "link4", "link5", "link6", "link7", "flange", "hand"]:
        if name in LINKS:
            lines.append('  <link name="%s">' % name)
            lines.append('    <visual><geometry><mesh filename="meshes/%s.obj"/></geometry></visual>' % name)
            lines.append("  </link>")
        else:
            lines.append('  <link name="%s"/>' % name)
    for name, parent, child, xyz, rpy, lo, hi, vel in JOINTS:
        lines.append('  <joint name="%s" type="revolute">' % name)
        lines.append('    <parent link="%s"/>' % parent)
        lines.append('    <child link="%s"/>' % child)
        lines.append('    <origin xyz="%g %g %g" rpy="%.10f %.10f %.10f"/>' % (xyz + rpy))
        lines.append('    <axis xyz="0 0 1"/>')
        lines.append('    <limit lower="%g" upper="%g" velocity="%g" effort="87"/>' % (lo, hi, vel))
        lines.append("  </joint>")
    lines.append('  <joint name="flange_joint" type="fixed">')
    lines.append('    <parent link="link7"/><child link="flange"/>')
    lines.append('    <origin xyz="0 0 0.107" rpy="0 0 0"/>')
    lines.append("  </joint>")
    lines.append('  <joint name="hand_joint" type="fixed">')
    lines.append('    <parent link="flange"/><child link="hand"/>')
    lines.append('    <origin xyz="0 0 0" rpy="0 0 0"/>')
    lines.append("  </joint>")
    lines.append("</robot>")
    with open(os.path.join(out, "arm7.urdf"), "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/assets/arm7")
