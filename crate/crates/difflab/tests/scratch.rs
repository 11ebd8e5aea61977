use difflab::model::ModelSpec;
use difflab::simulate::*;
use difflab::time_estimators::*;
use difflab::smoothing::*;

#[test]
fn dbg_glr() {
    let model = ModelSpec::cir(0.21459, 0.08571, 0.07830).unwrap();
    let path = simulate_exact(&SimPlan::new(model, Start::Stationary, 1.0/52.0, 1500, 1, 12, Scheme::Exact).unwrap()).unwrap();
    let h = 6.0;
    let kernel = KernelSpec::new(KernelShape::OneSidedEpanechnikov, h).unwrap();
    let t_grid = default_time_grid(&path, h, 40);
    let drift = fit_drift_time(&path, &kernel, &t_grid).unwrap();
    let resid = residuals_from_drift(&path, &drift).unwrap();
    println!("n resid = {}", resid.t.len());
    let c = fit_constant_vol(&resid).unwrap();
    println!("const: b0={} b1={} loglik={}", c.beta0, c.beta1, c.loglik);
    // local fits at a few anchors:
    for frac in [0.0, 0.05, 0.3, 0.6, 0.99] {
        let t0 = resid.t[0] + (resid.t[resid.t.len()-1] - resid.t[0]) * frac + 1.0/52.0;
        let mut s = Vec::new(); let mut e2 = Vec::new(); let mut w = Vec::new();
        for i in 0..resid.t.len() {
            let wi = kernel.eval(resid.t[i] - t0);
            if wi > 0.0 { s.push(resid.s[i]); e2.push(resid.e2[i]); w.push(wi); }
        }
        println!("t0 frac {frac}: window {} pts", s.len());
    }
    let stat = glr_constancy_statistic(&path, h).unwrap();
    println!("stat = {stat}");
}
