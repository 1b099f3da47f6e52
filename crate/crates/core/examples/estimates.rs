//! Lattice convolution sums and the transport product bounds on random fields.

use tnl::estimates::{lattice_convolution_sup, transport_ratio_suite, TransportBound};

fn main() -> tnl::Result<()> {
    for radius in [100, 200, 400] {
        let s = lattice_convolution_sup(1.5, 1.5, 0.5, 50, radius)?;
        println!("R = {radius}: sup_j |j|^0.5 S(j) = {:.5}", s.sup);
    }
    for bound in [
        TransportBound::Smooth { a: 0.5, b: 0.25 },
        TransportBound::L2 { b: 0.5 },
        TransportBound::Rough { a: 0.5, b: 0.25, eps: 0.1 },
    ] {
        for n in [32, 64] {
            let r = transport_ratio_suite(bound, n, 100, 0)?;
            println!("{bound:?} N = {n}: max ratio {:.4}", r.max_ratio);
        }
    }
    Ok(())
}
