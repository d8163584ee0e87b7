//! Little-endian binary model file.
//!
//! ```text
//! magic "FFMF" | version u32 | kind u8 | F u32 | k u32 | d u64
//! | eta f64 | lambda f64 | init_scale f64 | seed u64 | trained_epochs u32
//! | d*k weights f64 | d*k accumulators f64
//! ```

use std::io::{self, Read, Write};

use super::{FfmModel, ModelConfig, ModelKind};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FFMF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4 + 8 + 8 + 8 + 8 + 8 + 4;

pub(crate) fn write_model<W: Write>(model: &FfmModel, w: &mut W) -> io::Result<()> {
    let c = model.config();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[c.kind.code()])?;
    w.write_all(&(c.num_fields as u32).to_le_bytes())?;
    w.write_all(&(c.latent_dim as u32).to_le_bytes())?;
    w.write_all(&(c.hash_space as u64).to_le_bytes())?;
    w.write_all(&c.learning_rate.to_le_bytes())?;
    w.write_all(&c.l2.to_le_bytes())?;
    w.write_all(&c.init_scale.to_le_bytes())?;
    w.write_all(&c.seed.to_le_bytes())?;
    w.write_all(&model.trained_epochs().to_le_bytes())?;
    for v in model.weights().iter().chain(model.accum()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_table<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what} table")),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_model<R: Read>(r: &mut R) -> Result<FfmModel> {
    let magic: [u8; 4] = read_exact(r, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_exact(r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let [kind] = read_exact::<_, 1>(r, "model kind")?;
    let kind = ModelKind::from_code(kind).ok_or_else(|| Error::Format(format!("unknown model kind {kind}")))?;
    let num_fields = u32::from_le_bytes(read_exact(r, "field count")?) as usize;
    let latent_dim = u32::from_le_bytes(read_exact(r, "latent dim")?) as usize;
    let hash_space = u64::from_le_bytes(read_exact(r, "hash space")?);
    let learning_rate = f64::from_le_bytes(read_exact(r, "learning rate")?);
    let l2 = f64::from_le_bytes(read_exact(r, "l2")?);
    let init_scale = f64::from_le_bytes(read_exact(r, "init scale")?);
    let seed = u64::from_le_bytes(read_exact(r, "seed")?);
    let trained_epochs = u32::from_le_bytes(read_exact(r, "trained epochs")?);

    let hash_space = usize::try_from(hash_space).map_err(|_| Error::Format("hash space too large".into()))?;
    let config = ModelConfig {
        num_fields,
        latent_dim,
        hash_space,
        learning_rate,
        l2,
        init_scale,
        seed,
        kind,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let n = hash_space
        .checked_mul(latent_dim)
        .ok_or_else(|| Error::Format("table size overflows".into()))?;
    let weights = read_table(r, n, "weight")?;
    let accum = read_table(r, n, "accumulator")?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    FfmModel::from_parts(config, weights, accum, trained_epochs).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureVector;

    fn trained() -> FfmModel {
        let mut m = FfmModel::new(ModelConfig::ffm(3, 2, 64).with_seed(9).with_l2(1e-4)).unwrap();
        for i in 0..50u64 {
            let x = FeatureVector::new(i % 3 == 0, [(0, i % 7), (1, i % 5), (2, i)]).unwrap();
            m.sgd_step(&x).unwrap();
        }
        m.set_trained_epochs(3);
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = trained();
        let back = FfmModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.weights()), bits(m.weights()));
        assert_eq!(bits(back.accum()), bits(m.accum()));
    }

    #[test]
    fn lr_cross_round_trips() {
        let m = FfmModel::new(ModelConfig::lr_cross(4, 32)).unwrap();
        assert_eq!(FfmModel::from_bytes(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let mut bytes = trained().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(FfmModel::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version_is_a_format_error() {
        let mut bytes = trained().to_bytes();
        bytes[4] = 99;
        assert!(matches!(FfmModel::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = trained().to_bytes();
        for cut in [0, 3, 10, HEADER_LEN, bytes.len() - 1] {
            assert!(
                matches!(FfmModel::from_bytes(&bytes[..cut]), Err(Error::Format(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn file_size_matches_layout() {
        let m = FfmModel::new(ModelConfig::ffm(2, 2, 1 << 20)).unwrap();
        assert_eq!(HEADER_LEN, 61);
        assert_eq!(m.to_bytes().len(), HEADER_LEN + (1 << 20) * 2 * 2 * 8);
    }
}
