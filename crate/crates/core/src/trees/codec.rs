//! `.tcm` model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "TCM1" | version u16 | task u8 | kind u8 | n_trees u32
//! n_estimators u32 | seed u64 | learning_rate f64
//! max_depth u32 | min_samples_leaf u32 | min_samples_split u32
//! split_strategy u8 | max_features tag u8 | max_features count u32 | criterion u8
//! n_features u32 | (len u16, utf-8 bytes) * n_features
//! n_classes u32 | code u32 * n_classes
//! n_samples u64 | meta seed u64 | timestamp u64 | model_version u32
//! per tree: weight f64 | n_nodes u32 | n_outputs u32
//!   per node: feature i32 | threshold f64 | left i32 | right i32
//!             impurity f64 | weight f64 | payload f64 * n_outputs
//! crc32 u32 over every preceding byte
//! ```

use super::{
    Criterion, EnsembleKind, EnsembleModel, EnsembleSpec, MaxFeatures, Node, SplitStrategy, Task,
    TrainingMeta, Tree, TreeParams,
};

pub const MAGIC: &[u8; 4] = b"TCM1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("empty model stream")]
    Empty,
    #[error("truncated model stream")]
    Truncated,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn task_code(t: Task) -> u8 {
    match t {
        Task::Classify => 0,
        Task::Regress => 1,
    }
}

fn kind_code(k: EnsembleKind) -> u8 {
    match k {
        EnsembleKind::Bagging => 0,
        EnsembleKind::RandomForest => 1,
        EnsembleKind::ExtraTrees => 2,
        EnsembleKind::AdaBoost => 3,
    }
}

pub fn serialize_model(model: &EnsembleModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let s = &model.spec;
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(task_code(s.task));
    w.u8(kind_code(s.kind));
    w.u32(model.trees.len() as u32);
    w.u32(s.n_estimators as u32);
    w.u64(s.seed);
    w.f64(s.learning_rate);
    w.u32(s.base.max_depth as u32);
    w.u32(s.base.min_samples_leaf as u32);
    w.u32(s.base.min_samples_split as u32);
    w.u8(match s.base.split_strategy {
        SplitStrategy::Best => 0,
        SplitStrategy::Random => 1,
    });
    let (tag, count) = match s.base.max_features {
        MaxFeatures::All => (0, 0),
        MaxFeatures::Sqrt => (1, 0),
        MaxFeatures::Count(c) => (2, c as u32),
    };
    w.u8(tag);
    w.u32(count);
    w.u8(match s.base.criterion {
        Criterion::Gini => 0,
        Criterion::Variance => 1,
    });
    w.u32(model.feature_names.len() as u32);
    for f in &model.feature_names {
        w.u16(f.len() as u16);
        w.0.extend_from_slice(f.as_bytes());
    }
    w.u32(model.class_codes.len() as u32);
    for &c in &model.class_codes {
        w.u32(c);
    }
    w.u64(model.meta.n_samples);
    w.u64(model.meta.seed);
    w.u64(model.meta.timestamp);
    w.u32(model.meta.model_version);
    for (t, &tw) in model.trees.iter().zip(&model.tree_weights) {
        w.f64(tw);
        w.u32(t.nodes.len() as u32);
        w.u32(t.n_outputs as u32);
        for (i, n) in t.nodes.iter().enumerate() {
            w.i32(n.feature);
            w.f64(n.threshold);
            w.i32(n.left);
            w.i32(n.right);
            w.f64(n.impurity);
            w.f64(n.weight);
            for v in t.node_values(i) {
                w.f64(*v);
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        self.arr().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        self.arr().map(u32::from_le_bytes)
    }
    fn i32(&mut self) -> Result<i32, CodecError> {
        self.arr().map(i32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        self.arr().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        self.arr().map(f64::from_le_bytes)
    }
}

fn invalid(msg: impl Into<String>) -> CodecError {
    CodecError::Invalid(msg.into())
}

pub fn deserialize_model(bytes: &[u8]) -> Result<EnsembleModel, CodecError> {
    if bytes.is_empty() {
        return Err(CodecError::Empty);
    }
    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(CodecError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let (body, footer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(footer.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CodecError::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 6 };
    let task = match r.u8()? {
        0 => Task::Classify,
        1 => Task::Regress,
        t => return Err(invalid(format!("task code {t}"))),
    };
    let kind = match r.u8()? {
        0 => EnsembleKind::Bagging,
        1 => EnsembleKind::RandomForest,
        2 => EnsembleKind::ExtraTrees,
        3 => EnsembleKind::AdaBoost,
        k => return Err(invalid(format!("kind code {k}"))),
    };
    let n_trees = r.u32()? as usize;
    let n_estimators = r.u32()? as usize;
    let seed = r.u64()?;
    let learning_rate = r.f64()?;
    let max_depth = r.u32()? as usize;
    let min_samples_leaf = r.u32()? as usize;
    let min_samples_split = r.u32()? as usize;
    let split_strategy = match r.u8()? {
        0 => SplitStrategy::Best,
        1 => SplitStrategy::Random,
        v => return Err(invalid(format!("split strategy {v}"))),
    };
    let tag = r.u8()?;
    let count = r.u32()? as usize;
    let max_features = match tag {
        0 => MaxFeatures::All,
        1 => MaxFeatures::Sqrt,
        2 => MaxFeatures::Count(count),
        v => return Err(invalid(format!("max_features tag {v}"))),
    };
    let criterion = match r.u8()? {
        0 => Criterion::Gini,
        1 => Criterion::Variance,
        v => return Err(invalid(format!("criterion {v}"))),
    };
    let nf = r.u32()? as usize;
    let mut feature_names = Vec::with_capacity(nf.min(4096));
    for _ in 0..nf {
        let len = r.u16()? as usize;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| invalid("feature name is not UTF-8"))?;
        feature_names.push(s.to_string());
    }
    let nc = r.u32()? as usize;
    let mut class_codes = Vec::with_capacity(nc.min(4096));
    for _ in 0..nc {
        class_codes.push(r.u32()?);
    }
    let meta = TrainingMeta {
        n_samples: r.u64()?,
        seed: r.u64()?,
        timestamp: r.u64()?,
        model_version: r.u32()?,
    };
    let expected_outputs = match task {
        Task::Classify => nc,
        Task::Regress => 1,
    };
    let mut trees = Vec::with_capacity(n_trees.min(4096));
    let mut tree_weights = Vec::with_capacity(n_trees.min(4096));
    for _ in 0..n_trees {
        tree_weights.push(r.f64()?);
        let n_nodes = r.u32()? as usize;
        let n_outputs = r.u32()? as usize;
        if n_nodes == 0 || n_outputs != expected_outputs {
            return Err(invalid("tree shape does not match the model"));
        }
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        let mut values = Vec::with_capacity((n_nodes * n_outputs).min(1 << 20));
        for _ in 0..n_nodes {
            nodes.push(Node {
                feature: r.i32()?,
                threshold: r.f64()?,
                left: r.i32()?,
                right: r.i32()?,
                impurity: r.f64()?,
                weight: r.f64()?,
            });
            for _ in 0..n_outputs {
                values.push(r.f64()?);
            }
        }
        check_nodes(&nodes, nf)?;
        trees.push(Tree {
            nodes,
            n_outputs,
            values,
            class_codes: class_codes.clone(),
        });
    }
    if r.pos != body.len() {
        return Err(invalid("trailing bytes"));
    }
    if trees.is_empty() {
        return Err(invalid("model has no trees"));
    }
    let base = TreeParams {
        max_depth,
        min_samples_leaf,
        min_samples_split,
        split_strategy,
        max_features,
        criterion,
    };
    Ok(EnsembleModel {
        spec: EnsembleSpec {
            kind,
            n_estimators,
            base,
            task,
            seed,
            learning_rate,
        },
        trees,
        tree_weights,
        feature_names,
        class_codes,
        meta,
    })
}

/// Children must point forward so traversal always terminates.
fn check_nodes(nodes: &[Node], n_features: usize) -> Result<(), CodecError> {
    for (i, n) in nodes.iter().enumerate() {
        if n.is_leaf() {
            continue;
        }
        let ok_child = |c: i32| c > i as i32 && (c as usize) < nodes.len();
        if n.feature as usize >= n_features || !ok_child(n.left) || !ok_child(n.right) {
            return Err(invalid(format!("node {i} is malformed")));
        }
    }
    Ok(())
}
