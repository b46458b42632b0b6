use mixheat::operator::OperatorParams;
use mixheat::grid::SpectralGrid;
use mixheat::stepper::{solve_semilinear, PeriodicPropagator, StepControls};

fn main() {
    for p in [1.5, 2.0, 3.0] {
        let grid = SpectralGrid::new(1, 1.0, 8).unwrap();
        let mut prop = PeriodicPropagator::new(OperatorParams::new(1.0, 0.0, 0.5).unwrap(), grid);
        let r = solve_semilinear(&mut prop, p, &vec![1.0; 8], &StepControls::default(), None).unwrap();
        println!("p={p}: verdict {:?} t_est {:?} reason {:?} last_sup {:.3e} last_dt {:.3e} steps {}",
            r.verdict, r.t_est, r.inconclusive_reason, r.sup_norms.last().unwrap(), r.dts.last().unwrap(), r.times.len());
    }
}
