//! Planar geometry helpers for the spatial joins.

/// Euclidean distance from `p` to the segment `a`-`b`. Symmetric in the
/// endpoints to the last bit, so both directions of a two-way street tie.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (a, b) = if a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).is_le() { (a, b) } else { (b, a) };
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2
    } else {
        0.0
    };
    // Clamped projections use the endpoint itself, so segments meeting at
    // a node report bit-identical distances to it.
    let (cx, cy) = if t <= 0.0 {
        a
    } else if t >= 1.0 {
        b
    } else {
        (a.0 + t * dx, a.1 + t * dy)
    };
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1.0);
    point_segment_distance(p, a, b) <= 1e-9 * scale
}

/// Ray-casting containment; points on the boundary count as inside.
/// The ring may be given open or closed.
pub fn point_in_polygon(p: (f64, f64), ring: &[[f64; 2]]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = (ring[i][0], ring[i][1]);
        let b = (ring[j][0], ring[j][1]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
            if p.0 < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Shoelace area, always nonnegative.
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let mut twice = 0.0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice.abs() / 2.0
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Drops a repeated closing vertex.
pub fn open_ring(ring: &[[f64; 2]]) -> &[[f64; 2]] {
    match ring {
        [first, .., last] if ring.len() > 1 && first == last => &ring[..ring.len() - 1],
        _ => ring,
    }
}

/// True when two non-adjacent edges of the ring properly cross.
pub fn self_intersects(ring: &[[f64; 2]]) -> bool {
    let n = ring.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}
