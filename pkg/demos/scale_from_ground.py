#!/usr/bin/env python
"""
Where metric scale comes from
=============================

Normals are unchanged by scaling depth, so the normal consistency terms cannot
pin down scale.  The camera-height term can: a ground pixel lifted with
depth scaled by ``s`` sits ``s`` times as far below the camera.
"""
from articugeo.verify import ground_scale_terms

height = 1.5  # camera above a flat ground plane, metres
rows = ground_scale_terms(scales=(0.5, 0.8, 1.25, 2.0, 3.0), height=height)

print(f"{'scale':>6}{'L_CH':>10}{'|s-1| h':>10}{'L_NC':>12}{'L_PNC':>12}")
for s, ch, nc_v, pnc_v in rows:
    print(f"{s:>6.2f}{ch:>10.4f}{abs(s - 1) * height:>10.4f}{nc_v:>12.2e}{pnc_v:>12.2e}")
