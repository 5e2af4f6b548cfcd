//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "IDC1" | u32 version=1 | u32 vocab_size | u32 embed_dim | u32 out_dim
//! | u8 normalize | f64 temperature | u64 seed
//! | f32[vocab_size*embed_dim] token_table | f32[embed_dim*out_dim] projection
//! | f32[out_dim] proj_bias
//! | u32 n_tokens | n_tokens x (u32 byte_len | utf-8 bytes)
//! ```
//!
//! `init_scale` is not stored; a loaded model reports the default.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{EncoderConfig, EncoderModel};
use crate::corpus::Vocab;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IDC1";
pub const VERSION: u32 = 1;

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &EncoderModel, vocab: &Vocab) -> std::io::Result<()> {
    let c = &model.config;
    let to_io = |e: Error| std::io::Error::new(ErrorKind::InvalidInput, e.to_string());
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (v, what) in [(c.vocab_size, "vocab_size"), (c.embed_dim, "embed_dim"), (c.out_dim, "out_dim")] {
        w.write_all(&u32_field(v, what).map_err(to_io)?.to_le_bytes())?;
    }
    w.write_all(&[c.normalize as u8])?;
    w.write_all(&c.temperature.to_le_bytes())?;
    w.write_all(&c.seed.to_le_bytes())?;
    for tensor in [&model.token_table, &model.projection, &model.proj_bias] {
        for x in tensor.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.write_all(&u32_field(vocab.len(), "vocabulary length").map_err(to_io)?.to_le_bytes())?;
    for tok in vocab.tokens() {
        w.write_all(&u32_field(tok.len(), "token length").map_err(to_io)?.to_le_bytes())?;
        w.write_all(tok.as_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Format(format!("truncated while reading {what}")),
            _ => Error::Format(format!("read error in {what}: {e}")),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.bytes(what)?))).collect()
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(EncoderModel, Vocab)> {
    let mut r = Reader { inner: r };
    let magic: [u8; 4] = r.bytes("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let vocab_size = r.u32("vocab_size")? as usize;
    let embed_dim = r.u32("embed_dim")? as usize;
    let out_dim = r.u32("out_dim")? as usize;
    let normalize = match r.bytes::<1>("normalize")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("normalize flag must be 0 or 1, got {b}"))),
    };
    let temperature = f64::from_le_bytes(r.bytes("temperature")?);
    let seed = u64::from_le_bytes(r.bytes("seed")?);
    let config = EncoderConfig {
        vocab_size,
        embed_dim,
        out_dim,
        normalize,
        temperature,
        seed,
        ..Default::default()
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("invalid header: {e}")))?;
    let token_table = r.f32s(vocab_size * embed_dim, "token_table")?;
    let projection = r.f32s(embed_dim * out_dim, "projection")?;
    let proj_bias = r.f32s(out_dim, "proj_bias")?;

    let n_tokens = r.u32("vocabulary length")? as usize;
    if n_tokens != vocab_size {
        return Err(Error::Format(format!(
            "vocabulary has {n_tokens} entries but header says {vocab_size}"
        )));
    }
    let mut tokens = Vec::with_capacity(n_tokens);
    for i in 0..n_tokens {
        let len = r.u32("token length")? as usize;
        let mut buf = vec![0u8; len];
        r.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("truncated while reading token {i}")))?;
        tokens.push(String::from_utf8(buf).map_err(|_| Error::Format(format!("token {i} is not UTF-8")))?);
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after vocabulary".into()));
    }
    let vocab = Vocab::from_tokens(tokens)?;
    Ok((
        EncoderModel {
            config,
            token_table,
            projection,
            proj_bias,
        },
        vocab,
    ))
}

pub fn save_checkpoint(path: &Path, model: &EncoderModel, vocab: &Vocab) -> Result<()> {
    if vocab.len() != model.config.vocab_size {
        return Err(Error::VocabMismatch {
            model: model.config.vocab_size,
            corpus: vocab.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, model, vocab)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderModel, Vocab)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (EncoderModel, Vocab) {
        let mut vocab = Vocab::new();
        for w in ["alpha", "beta", "gämma"] {
            vocab.intern(w);
        }
        let model = EncoderModel::new(EncoderConfig {
            vocab_size: vocab.len(),
            embed_dim: 5,
            out_dim: 3,
            temperature: 0.07,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        (model, vocab)
    }

    fn bytes(model: &EncoderModel, vocab: &Vocab) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, model, vocab).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.idc1");
        let (model, vocab) = fixture();
        save_checkpoint(&p, &model, &vocab).unwrap();
        let (m2, v2) = load_checkpoint(&p).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&model.token_table), bits(&m2.token_table));
        assert_eq!(bits(&model.projection), bits(&m2.projection));
        assert_eq!(bits(&model.proj_bias), bits(&m2.proj_bias));
        assert_eq!(model.config.temperature.to_bits(), m2.config.temperature.to_bits());
        assert_eq!(model.config.seed, m2.config.seed);
        assert_eq!(vocab, v2);
        assert_eq!(std::fs::read(&p).unwrap(), bytes(&m2, &v2));
    }

    #[test]
    fn header_layout() {
        let (model, vocab) = fixture();
        let b = bytes(&model, &vocab);
        assert_eq!(&b[..4], b"IDC1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(b[20], 1);
        assert_eq!(f64::from_le_bytes(b[21..29].try_into().unwrap()), 0.07);
        assert_eq!(u64::from_le_bytes(b[29..37].try_into().unwrap()), 11);
        let floats = 4 * 5 + 5 * 3 + 3;
        let vocab_bytes = 4 + (4 + 5) + (4 + 5) + (4 + 4) + (4 + 6);
        assert_eq!(b.len(), 37 + 4 * floats + vocab_bytes);
    }

    #[test]
    fn wrong_magic() {
        let (model, vocab) = fixture();
        let mut b = bytes(&model, &vocab);
        b[0] = b'X';
        let err = read_checkpoint(&b[..]).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn wrong_version() {
        let (model, vocab) = fixture();
        let mut b = bytes(&model, &vocab);
        b[4] = 2;
        assert!(read_checkpoint(&b[..]).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn truncation_names_section() {
        let (model, vocab) = fixture();
        let b = bytes(&model, &vocab);
        let err = read_checkpoint(&b[..50]).unwrap_err();
        assert!(err.to_string().contains("truncated while reading token_table"), "{err}");
        let err = read_checkpoint(&b[..b.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let (model, vocab) = fixture();
        let mut b = bytes(&model, &vocab);
        b.push(0);
        assert!(read_checkpoint(&b[..]).is_err());
    }

    #[test]
    fn save_requires_matching_vocab() {
        let dir = tempfile::tempdir().unwrap();
        let (model, _) = fixture();
        let err = save_checkpoint(&dir.path().join("m"), &model, &Vocab::new()).unwrap_err();
        assert!(matches!(err, Error::VocabMismatch { model: 4, corpus: 1 }));
    }
}
