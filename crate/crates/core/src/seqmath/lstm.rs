use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::loss::{check_label, logistic, Bce};
use super::params::{DenseParams, GradientSet, LstmParams};
use crate::{Error, Result};

/// Last hidden state of the LSTM: the model's summary of a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Array1<f64>);

impl Embedding {
    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-step activations kept for the backward pass.
struct Trace {
    hidden: Array2<f64>,
    cells: Array2<f64>,
    /// Activated gates per step, stacked `[i, f, g, o]`.
    gates: Array2<f64>,
}

fn check_input(seq: ArrayView2<'_, f64>, params: &LstmParams) -> Result<()> {
    if seq.nrows() == 0 {
        return Err(Error::Shape("sequence must contain at least one step".into()));
    }
    if seq.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "sequence has {} columns, LSTM expects {}",
            seq.ncols(),
            params.input_dim()
        )));
    }
    if let Some(bad) = seq.iter().find(|x| !x.is_finite()) {
        return Err(Error::Input(format!("non-finite feature value {bad}")));
    }
    Ok(())
}

fn run(seq: ArrayView2<'_, f64>, params: &LstmParams) -> Trace {
    let steps = seq.nrows();
    let h = params.hidden_dim();
    let mut hidden = Array2::zeros((steps, h));
    let mut cells = Array2::zeros((steps, h));
    let mut gates = Array2::zeros((steps, 4 * h));
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);

    for t in 0..steps {
        let mut a = params.w_input.dot(&seq.row(t));
        a += &params.w_recurrent.dot(&h_prev);
        a += &params.bias;
        let mut act = gates.row_mut(t);
        for j in 0..h {
            let i_g = logistic(a[j]);
            let f_g = logistic(a[h + j]);
            let g_g = a[2 * h + j].tanh();
            let o_g = logistic(a[3 * h + j]);
            let c = f_g * c_prev[j] + i_g * g_g;
            let hv = o_g * c.tanh();
            act[j] = i_g;
            act[h + j] = f_g;
            act[2 * h + j] = g_g;
            act[3 * h + j] = o_g;
            cells[[t, j]] = c;
            hidden[[t, j]] = hv;
        }
        h_prev.assign(&hidden.row(t));
        c_prev.assign(&cells.row(t));
    }
    Trace { hidden, cells, gates }
}

/// Runs the recurrence from zero initial state.
///
/// Returns every hidden state (`T × H`) and the last one as the embedding.
pub fn lstm_forward(seq: ArrayView2<'_, f64>, params: &LstmParams) -> Result<(Array2<f64>, Embedding)> {
    params.validate()?;
    check_input(seq, params)?;
    let trace = run(seq, params);
    let last = trace.hidden.row(trace.hidden.nrows() - 1).to_owned();
    Ok((trace.hidden, Embedding(last)))
}

/// Sigmoid head applied to one hidden state.
pub fn dense_head(dense: &DenseParams, hidden: ArrayView1<'_, f64>) -> f64 {
    logistic(dense.weights.dot(&hidden) + dense.bias)
}

/// Outcome probability for the whole sequence.
pub fn predict(seq: ArrayView2<'_, f64>, lstm: &LstmParams, dense: &DenseParams) -> Result<f64> {
    dense.validate(lstm.hidden_dim())?;
    let (_, emb) = lstm_forward(seq, lstm)?;
    Ok(dense_head(dense, emb.0.view()))
}

/// Loss and exact gradients of unit-weight BCE through prediction.
pub fn backward(
    seq: ArrayView2<'_, f64>,
    label: f64,
    lstm: &LstmParams,
    dense: &DenseParams,
) -> Result<(f64, GradientSet)> {
    backward_with(seq, label, lstm, dense, &Bce::default())
}

/// Backpropagation through time for one labelled sequence.
pub fn backward_with(
    seq: ArrayView2<'_, f64>,
    label: f64,
    lstm: &LstmParams,
    dense: &DenseParams,
    bce: &Bce,
) -> Result<(f64, GradientSet)> {
    check_label(label)?;
    lstm.validate()?;
    dense.validate(lstm.hidden_dim())?;
    check_input(seq, lstm)?;

    let trace = run(seq, lstm);
    let steps = seq.nrows();
    let h = lstm.hidden_dim();
    let last = trace.hidden.row(steps - 1);
    let z = dense_head(dense, last);
    let loss = bce.loss(z, label)?;
    let dlogit = bce.dlogit(z, label);

    let mut grads = GradientSet::zeros(lstm.input_dim(), h);
    grads.dense.weights = &last * dlogit;
    grads.dense.bias = dlogit;

    let mut dh = &dense.weights * dlogit;
    let mut dc_next = Array1::<f64>::zeros(h);
    let mut da = Array1::<f64>::zeros(4 * h);
    let zeros = Array1::<f64>::zeros(h);

    for t in (0..steps).rev() {
        let act = trace.gates.row(t);
        let c_prev = if t > 0 { trace.cells.row(t - 1) } else { zeros.view() };
        let h_prev = if t > 0 { trace.hidden.row(t - 1) } else { zeros.view() };
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
            let tc = trace.cells[[t, j]].tanh();
            let d_o = dh[j] * tc;
            let dc = dc_next[j] + dh[j] * o_g * (1.0 - tc * tc);
            da[j] = dc * g_g * i_g * (1.0 - i_g);
            da[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
            da[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
            da[3 * h + j] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        let da_col = da.view().insert_axis(Axis(1));
        grads.lstm.w_input += &da_col.dot(&seq.slice(s![t..t + 1, ..]));
        grads.lstm.w_recurrent += &da_col.dot(&h_prev.insert_axis(Axis(0)));
        grads.lstm.bias += &da;
        dh = lstm.w_recurrent.t().dot(&da);
    }
    Ok((loss, grads))
}
