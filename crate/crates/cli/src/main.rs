fn main() {
    let steep = |z: f64| z.powi(1 << 20);
    let pts = gwcoal::quad::breakpoints_toward_one(2.0f64.powi(-20));
    println!("pts = {pts:?}");
    match gwcoal::quad::integrate(steep, &pts, 1e-12, 100_000) {
        Ok(r) => {
            let want = 1.0 / ((1u64 << 20) as f64 + 1.0);
            println!(
                "value {} want {want} diff {:.3e} err {:.3e} panels {} evals {}",
                r.value,
                (r.value - want).abs(),
                r.error,
                r.panels,
                r.evals
            );
        }
        Err(e) => println!("failed: {e}"),
    }
}
