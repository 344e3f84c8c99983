//! LSTM cells and stacks shared by the token encoder, the sentence encoder,
//! and the decoder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::ParamRegistry;
use crate::tensor::{Graph, Tensor, TensorRef};

/// One LSTM cell with fused gate weights. Gate order in the 4h-wide fused
/// matrices is input, forget, candidate, output.
pub struct LstmCell {
    w_x: TensorRef, // d_in x 4h
    w_h: TensorRef, // h x 4h
    bias: TensorRef, // 1 x 4h
    hidden: usize,
}

impl LstmCell {
    pub fn init<R: Rng>(
        graph: &mut Graph,
        reg: &mut ParamRegistry,
        rng: &mut R,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Self {
        LstmCell {
            w_x: reg.glorot(graph, rng, format!("{name}.w_x"), &[input_dim, 4 * hidden]),
            w_h: reg.glorot(graph, rng, format!("{name}.w_h"), &[hidden, 4 * hidden]),
            bias: reg.zeros(graph, format!("{name}.bias"), &[1, 4 * hidden]),
            hidden,
        }
    }

    /// Standard cell equations:
    ///   i = sigmoid(z_i), f = sigmoid(z_f), g = tanh(z_g), o = sigmoid(z_o)
    ///   c' = f*c + i*g ;  h' = o * tanh(c')
    /// where z = x.Wx + h.Wh + b.
    pub fn step(
        &self,
        g: &mut Graph,
        x: TensorRef,
        h: TensorRef,
        c: TensorRef,
    ) -> (TensorRef, TensorRef) {
        let hid = self.hidden;
        let zx = g.matmul(x, self.w_x);
        let zh = g.matmul(h, self.w_h);
        let z0 = g.add(zx, zh);
        let z = g.add(z0, self.bias);
        let zi = g.slice_cols(z, 0, hid);
        let zf = g.slice_cols(z, hid, 2 * hid);
        let zg = g.slice_cols(z, 2 * hid, 3 * hid);
        let zo = g.slice_cols(z, 3 * hid, 4 * hid);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let fc = g.mul(f, c);
        let ig = g.mul(i, cand);
        let c_new = g.add(fc, ig);
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc);
        (h_new, c_new)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

/// Per-layer hidden and cell state of a running (uni-directional) stack.
#[derive(Clone)]
pub struct LstmState {
    pub layers: Vec<(TensorRef, TensorRef)>,
}

/// Multi-layer uni-directional LSTM with dropout between layers.
pub struct LstmStack {
    pub cells: Vec<LstmCell>,
    dropout: f64,
}

impl LstmStack {
    pub fn init<R: Rng>(
        graph: &mut Graph,
        reg: &mut ParamRegistry,
        rng: &mut R,
        name: &str,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    ) -> Self {
        assert!(layers >= 1);
        let cells = (0..layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { hidden };
                LstmCell::init(graph, reg, rng, &format!("{name}.l{l}"), d, hidden)
            })
            .collect();
        LstmStack { cells, dropout }
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        let layers = self
            .cells
            .iter()
            .map(|c| {
                let h = g.constant(Tensor::zeros(vec![1, c.hidden()]));
                let cc = g.constant(Tensor::zeros(vec![1, c.hidden()]));
                (h, cc)
            })
            .collect();
        LstmState { layers }
    }

    /// Advances all layers by one step; returns the top layer's hidden
    /// state. Dropout applies to the inputs of layers above the first.
    pub fn step(
        &self,
        g: &mut Graph,
        x: TensorRef,
        state: &mut LstmState,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> TensorRef {
        let mut input = x;
        for (l, cell) in self.cells.iter().enumerate() {
            if l > 0 {
                input = g.dropout(input, self.dropout, training, rng);
            }
            let (h, c) = state.layers[l];
            let (h2, c2) = cell.step(g, input, h, c);
            state.layers[l] = (h2, c2);
            input = h2;
        }
        input
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }
}

/// Final (hidden, cell) pair of one direction of one layer.
pub struct DirectionFinal {
    pub h: TensorRef,
    pub c: TensorRef,
}

/// Output of a bidirectional pass.
pub struct BiLstmOutput {
    /// Per-step top-layer states, each `1 x 2h`.
    pub states: Vec<TensorRef>,
    /// Per layer: (forward final, backward final). The backward final is the
    /// backward cell's state after it has consumed the whole sequence, i.e.
    /// its state at t = 0.
    pub finals: Vec<(DirectionFinal, DirectionFinal)>,
}

/// Multi-layer bidirectional LSTM: each layer runs a forward and a backward
/// cell over the layer input and feeds the per-step concatenation upward,
/// with dropout between layers.
pub struct BiLstm {
    layers: Vec<(LstmCell, LstmCell)>,
    hidden: usize,
    dropout: f64,
}

impl BiLstm {
    pub fn init<R: Rng>(
        graph: &mut Graph,
        reg: &mut ParamRegistry,
        rng: &mut R,
        name: &str,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    ) -> Self {
        assert!(layers >= 1);
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { 2 * hidden };
                let fw = LstmCell::init(graph, reg, rng, &format!("{name}.l{l}.fw"), d, hidden);
                let bw = LstmCell::init(graph, reg, rng, &format!("{name}.l{l}.bw"), d, hidden);
                (fw, bw)
            })
            .collect();
        BiLstm { layers, hidden, dropout }
    }

    /// Runs the full bidirectional stack over `inputs` (a `T x d_in`
    /// matrix, one row per token).
    pub fn encode(
        &self,
        g: &mut Graph,
        inputs: TensorRef,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> BiLstmOutput {
        let (t_len, _) = g.shape(inputs);
        assert!(t_len >= 1, "bilstm requires at least one input step");
        let mut layer_inputs: Vec<TensorRef> =
            (0..t_len).map(|t| g.gather_rows(inputs, &[t])).collect();
        let mut finals = Vec::new();
        let mut states: Vec<TensorRef> = Vec::new();
        for (l, (fw, bw)) in self.layers.iter().enumerate() {
            if l > 0 {
                for x in layer_inputs.iter_mut() {
                    *x = g.dropout(*x, self.dropout, training, rng);
                }
            }
            let zero_h = g.constant(Tensor::zeros(vec![1, self.hidden]));
            let zero_c = g.constant(Tensor::zeros(vec![1, self.hidden]));

            let mut fw_states = Vec::with_capacity(t_len);
            let (mut h, mut c) = (zero_h, zero_c);
            for &x in &layer_inputs {
                let (h2, c2) = fw.step(g, x, h, c);
                fw_states.push(h2);
                h = h2;
                c = c2;
            }
            let fw_final = DirectionFinal { h, c };

            let mut bw_states = vec![zero_h; t_len];
            let (mut h, mut c) = (zero_h, zero_c);
            for t in (0..t_len).rev() {
                let (h2, c2) = bw.step(g, layer_inputs[t], h, c);
                bw_states[t] = h2;
                h = h2;
                c = c2;
            }
            let bw_final = DirectionFinal { h, c };

            states = (0..t_len)
                .map(|t| g.concat(&[fw_states[t], bw_states[t]], 1))
                .collect();
            finals.push((fw_final, bw_final));
            layer_inputs = states.clone();
        }
        BiLstmOutput { states, finals }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers.len()
    }
}
