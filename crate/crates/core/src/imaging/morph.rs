use super::Mask;

/// Offsets `(dx, dy)` whose pixel centers lie within Euclidean distance `radius`.
pub fn disk_offsets(radius: u32) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                offs.push((dx, dy));
            }
        }
    }
    offs
}

/// Grayscale dilation (local maximum) over a disk structuring element.
pub fn dilate(mask: &Mask, radius: u32) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let offs = disk_offsets(radius);
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            let v = mask.get(x, y);
            if v <= 0.0 {
                continue;
            }
            for &(dx, dy) in &offs {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if out.get(nx, ny) < v {
                    out.set(nx, ny, v);
                }
            }
        }
    }
    out
}
