use ssea_core::horseshoe::*;
use std::time::Instant;

fn main() {
    let geom = build_geometry::<f64>(1.0, &BuildOptions::default()).unwrap();
    let ren = Renormalized::new(&geom);
    let t0 = Instant::now();
    let slices = s1_slices(&ren, 24);
    let found = slices.iter().flatten().count();
    println!("slices found: {found}/24 [{:?}]", t0.elapsed());
    for sl in slices.iter().flatten().take(4) {
        println!("y~{:.4}: x in [{:.9}, {:.9}] width {:.3e}", sl.0, sl.1, sl.2, sl.2 - sl.1);
    }
    let t1 = Instant::now();
    match partition_geometry(&ren) {
        Ok(pg) => {
            println!("Q = ({:.6}, {:.6}) trace {:.4} eig {:?}", pg.q.0, pg.q.1, pg.q_trace, pg.q_eigenvalues);
            println!("x_s = {:.8}, y_u = {:.8} (limit {:.6})", pg.x_s, pg.y_u, pg.lambda.powf(0.1));
            println!("tau_s = {:?} tau_u = {:?}", pg.tau_s(), pg.tau_u());
            println!("[{:?}]", t1.elapsed());
        }
        Err(e) => println!("partition failed: {e}"),
    }
}
