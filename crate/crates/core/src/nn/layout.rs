use std::ops::Range;

use super::VitConfig;

/// A contiguous `rows × cols` block of the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    Ones,
    TruncNormal,
    Scorer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub ln1_g: Slot,
    pub ln1_b: Slot,
    pub wq: Slot,
    pub bq: Slot,
    pub wk: Slot,
    pub bk: Slot,
    pub wv: Slot,
    pub bv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub scorer: Slot,
    pub ln2_g: Slot,
    pub ln2_b: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
}

/// Position of every tensor in the flat buffer. Linear maps are stored
/// `in × out` so that a row of activations multiplies from the left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub patch_w: Slot,
    pub patch_b: Slot,
    pub cls: Slot,
    pub pos: Slot,
    pub layers: Vec<LayerSlots>,
    pub head_w: Slot,
    pub head_b: Slot,
    total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, rows: usize, cols: usize) -> Slot {
        let s = Slot { offset: self.0, rows, cols };
        self.0 += rows * cols;
        s
    }
}

impl Layout {
    pub fn new(c: &VitConfig) -> Self {
        let h = c.hidden_size;
        let mut cur = Cursor(0);
        let patch_w = cur.take(c.patch_dim(), h);
        let patch_b = cur.take(1, h);
        let cls = cur.take(1, h);
        let pos = cur.take(c.num_tokens(), h);
        let layers = (0..c.num_layers)
            .map(|_| LayerSlots {
                ln1_g: cur.take(1, h),
                ln1_b: cur.take(1, h),
                wq: cur.take(h, h),
                bq: cur.take(1, h),
                wk: cur.take(h, h),
                bk: cur.take(1, h),
                wv: cur.take(h, h),
                bv: cur.take(1, h),
                wo: cur.take(h, h),
                bo: cur.take(1, h),
                scorer: cur.take(1, c.scorer_params()),
                ln2_g: cur.take(1, h),
                ln2_b: cur.take(1, h),
                w1: cur.take(h, c.mlp_hidden),
                b1: cur.take(1, c.mlp_hidden),
                w2: cur.take(c.mlp_hidden, h),
                b2: cur.take(1, h),
            })
            .collect();
        let head_w = cur.take(h, c.num_classes);
        let head_b = cur.take(1, c.num_classes);
        Self { patch_w, patch_b, cls, pos, layers, head_w, head_b, total: cur.0 }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Every tensor with its name and initialisation rule, in buffer order.
    pub fn tensors(&self) -> Vec<(String, Slot, Init)> {
        let mut out = vec![
            ("patch.weight".to_string(), self.patch_w, Init::TruncNormal),
            ("patch.bias".to_string(), self.patch_b, Init::Zeros),
            ("cls".to_string(), self.cls, Init::Zeros),
            ("pos".to_string(), self.pos, Init::TruncNormal),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let entries = [
                ("ln1.gain", l.ln1_g, Init::Ones),
                ("ln1.bias", l.ln1_b, Init::Zeros),
                ("q.weight", l.wq, Init::TruncNormal),
                ("q.bias", l.bq, Init::Zeros),
                ("k.weight", l.wk, Init::TruncNormal),
                ("k.bias", l.bk, Init::Zeros),
                ("v.weight", l.wv, Init::TruncNormal),
                ("v.bias", l.bv, Init::Zeros),
                ("out.weight", l.wo, Init::TruncNormal),
                ("out.bias", l.bo, Init::Zeros),
                ("scorer", l.scorer, Init::Scorer),
                ("ln2.gain", l.ln2_g, Init::Ones),
                ("ln2.bias", l.ln2_b, Init::Zeros),
                ("ffn1.weight", l.w1, Init::TruncNormal),
                ("ffn1.bias", l.b1, Init::Zeros),
                ("ffn2.weight", l.w2, Init::TruncNormal),
                ("ffn2.bias", l.b2, Init::Zeros),
            ];
            out.extend(entries.into_iter().map(|(n, s, init)| (format!("layer{i}.{n}"), s, init)));
        }
        out.push(("head.weight".into(), self.head_w, Init::TruncNormal));
        out.push(("head.bias".into(), self.head_b, Init::Zeros));
        out
    }
}
