//! Idealized 10-10 electrode positions for the 64-channel BCI2000 montage.

/// Channel order of the BCI2000 motor/imagery recordings.
pub const BCI2000_LABELS: [&str; 64] = [
    "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "CP5", "CP3", "CP1",
    "CPz", "CP2", "CP4", "CP6", "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F7", "F5", "F3", "F1", "Fz",
    "F2", "F4", "F6", "F8", "FT7", "FT8", "T7", "T8", "T9", "T10", "TP7", "TP8", "P7", "P5", "P3", "P1", "Pz", "P2",
    "P4", "P6", "P8", "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2", "Iz",
];

pub const OCCIPITAL: [&str; 3] = ["O1", "Oz", "O2"];
pub const FRONTAL: [&str; 3] = ["F3", "Fz", "F4"];

/// One 10% step of the nasion–inion arc, in degrees of inclination.
const STEP: f64 = 23.0;
/// Inclination that maps to the rim of the unit disk.
const RIM: f64 = 5.5 * STEP;

/// Lowercase label without EDF padding dots, e.g. `"Fc5."` → `"fc5"`.
pub fn normalize_label(s: &str) -> String {
    s.trim().trim_end_matches('.').to_ascii_lowercase()
}

fn unit(incl_deg: f64, az_deg: f64) -> [f64; 3] {
    let (t, p) = (incl_deg.to_radians(), az_deg.to_radians());
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

fn slerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let om = dot.clamp(-1.0, 1.0).acos();
    if om < 1e-12 {
        return a;
    }
    let (wa, wb) = (((1.0 - t) * om).sin() / om.sin(), (t * om).sin() / om.sin());
    [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]]
}

/// Azimuthal equidistant projection around the vertex: `x` toward the right
/// ear, `y` toward the nose, radius proportional to inclination.
fn project(v: [f64; 3]) -> [f64; 2] {
    let incl = v[2].clamp(-1.0, 1.0).acos();
    let r = incl.to_degrees() / RIM;
    let az = v[1].atan2(v[0]);
    [r * az.cos(), r * az.sin()]
}

/// Position on the sphere. Azimuth is measured from the right ear toward
/// the nose, so the nose is at 90° and the left ear at 180°.
fn sphere(label: &str) -> Option<[f64; 3]> {
    let l = normalize_label(label);
    // Midline electrodes: frontal rows forward of Cz, the rest behind it.
    let midline = [
        ("fpz", 4.0, 90.0),
        ("afz", 3.0, 90.0),
        ("fz", 2.0, 90.0),
        ("fcz", 1.0, 90.0),
        ("cz", 0.0, 0.0),
        ("cpz", 1.0, 270.0),
        ("pz", 2.0, 270.0),
        ("poz", 3.0, 270.0),
        ("oz", 4.0, 270.0),
        ("iz", 5.0, 270.0),
    ];
    if let Some(&(_, steps, az)) = midline.iter().find(|m| m.0 == l) {
        return Some(unit(steps * STEP, az));
    }
    match l.as_str() {
        "t9" => return Some(unit(5.0 * STEP, 180.0)),
        "t10" => return Some(unit(5.0 * STEP, 0.0)),
        _ => {}
    }
    let split = l.find(|c: char| c.is_ascii_digit())?;
    let (row, num) = l.split_at(split);
    let n: u32 = num.parse().ok()?;
    if n == 0 || n > 10 {
        return None;
    }
    let left = n % 2 == 1;
    // Equator angle from the nose for each row's outermost electrode, and
    // the row's midline electrode.
    let (rim_from_nose, mid) = match row {
        "fp" => (18.0, "fpz"),
        "af" => (36.0, "afz"),
        "f" => (54.0, "fz"),
        "ft" | "fc" => (72.0, "fcz"),
        "t" | "c" => (90.0, "cz"),
        "tp" | "cp" => (108.0, "cpz"),
        "p" => (126.0, "pz"),
        "po" => (144.0, "poz"),
        "o" => (162.0, "oz"),
        _ => return None,
    };
    let az_left = 90.0 + rim_from_nose;
    let az = if left { az_left } else { 180.0 - az_left };
    let rim = unit(4.0 * STEP, az);
    // Fp, O, FT, T and TP electrodes sit on the rim; other rows step toward it.
    let k = n.div_ceil(2);
    let t = match row {
        "fp" | "o" if k == 1 => 1.0,
        "ft" | "t" | "tp" if k == 4 => 1.0,
        "fp" | "o" | "ft" | "t" | "tp" => return None,
        _ if k <= 4 => f64::from(k) / 4.0,
        _ => return None,
    };
    Some(slerp(sphere(mid)?, rim, t))
}

/// Unit-disk coordinates of a 10-10 label, or `None` if unknown.
pub fn electrode_xy(label: &str) -> Option<[f64; 2]> {
    sphere(label).map(project)
}
