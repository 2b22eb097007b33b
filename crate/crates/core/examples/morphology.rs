//! Binary mask operations used to finish a segmentation: hole filling and
//! disk dilation, printed as ASCII.
//!
//! ```text
//! cargo run --example morphology
//! ```

use lesionseg::postprocess::{dilate_disk, fill_holes};
use lesionseg::BinaryMask;

fn show(title: &str, m: &BinaryMask) {
    println!("{title} ({} px)", m.count());
    for y in 0..m.height() {
        let row: String = (0..m.width()).map(|x| if m.get(x, y) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() {
    // a ring with a hole, plus a notch open to the outside
    let ring = BinaryMask::from_fn(21, 13, |x, y| {
        let (dx, dy) = (x as f64 - 10.0, y as f64 - 6.0);
        let r = (dx * dx + dy * dy).sqrt();
        (3.0..5.5).contains(&r) && !(x > 14 && y == 6)
    });
    show("input", &ring);
    let filled = fill_holes(&ring);
    show("fill_holes", &filled);
    for radius in [1, 2] {
        show(&format!("dilate_disk r={radius}"), &dilate_disk(&filled, radius));
    }
}
