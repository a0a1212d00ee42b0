//! Validation-loss driven learning-rate decay and early stopping.
//!
//! An epoch "improves" when its loss is below the best so far by more than
//! `threshold`. The first observation always improves.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    pub min_lr: f64,
    pub best: f64,
    pub bad_epochs: usize,
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Plateau {
            patience,
            factor,
            threshold: 1e-6,
            min_lr: 1e-6,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record one epoch's loss; returns the learning rate to use next.
    ///
    /// After `patience` consecutive epochs without improvement the rate is
    /// multiplied by `factor` (not below `min_lr`) and the count restarts.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub threshold: f64,
    pub best: f64,
    pub bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            threshold: 1e-6,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record one epoch's loss; `true` means stop now.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_keeps_lr() {
        let mut p = Plateau::new(5, 0.5);
        let mut lr = 1e-3;
        for i in 0..30 {
            lr = p.step(1.0 - i as f64 * 0.01, lr);
        }
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn flat_run_halves_every_patience() {
        let mut p = Plateau::new(5, 0.5);
        let mut lr = p.step(1.0, 1e-3);
        let mut halvings = vec![];
        for epoch in 1..=20 {
            let next = p.step(1.0, lr);
            if next < lr {
                halvings.push(epoch);
            }
            lr = next;
        }
        assert_eq!(halvings, vec![5, 10, 15, 20]);
        assert_eq!(lr, 1e-3 / 16.0);
    }

    #[test]
    fn six_flat_epochs_one_halving() {
        let mut p = Plateau::new(5, 0.5);
        let mut lr = 1e-3;
        for _ in 0..6 {
            lr = p.step(0.5, lr);
        }
        assert_eq!(lr, 5e-4);
    }

    #[test]
    fn lr_floor() {
        let mut p = Plateau::new(1, 0.5);
        let mut lr = 3e-6;
        for _ in 0..10 {
            lr = p.step(1.0, lr);
        }
        assert_eq!(lr, 1e-6);
    }

    #[test]
    fn stopper_rules() {
        let mut s = EarlyStopper::new(50);
        let stop_at = (1..=100).find(|_| s.step(2.0));
        assert_eq!(stop_at, Some(51));

        let mut s = EarlyStopper::new(50);
        for _ in 1..=49 {
            assert!(!s.step(2.0));
        }
        assert!(!s.step(1.0));
        assert_eq!(s.bad_epochs, 0);

        let mut s = EarlyStopper::new(50);
        assert!((0..200).all(|i| !s.step(10.0 - i as f64 * 0.01)));
    }
}
