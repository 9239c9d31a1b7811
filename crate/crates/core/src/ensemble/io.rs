//! Binary dump/load of payoff tensors and CSV export of sampled entries.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                               |
//! |-------|-------------------------------------|
//! | 8     | magic `EWAPAYOF`                    |
//! | 4     | format version (u32)                |
//! | 4     | players p (u32)                     |
//! | 4     | actions N (u32)                     |
//! | 8     | gamma (f64)                         |
//! | 8     | seed (u64)                          |
//! | 8·p·N^p | tables of players 1..p, storage order |

use std::io::{Read, Write};

use super::{GameParams, PayoffTensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"EWAPAYOF";
pub const TENSOR_VERSION: u32 = 1;

pub fn write_tensor<W: Write>(tensor: &PayoffTensor, mut w: W) -> Result<()> {
    let params = tensor.params();
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    w.write_all(&(params.players as u32).to_le_bytes())?;
    w.write_all(&(params.actions as u32).to_le_bytes())?;
    w.write_all(&params.gamma.to_le_bytes())?;
    w.write_all(&params.seed.to_le_bytes())?;
    for mu in 0..params.players {
        for v in tensor.table(mu) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a tensor written by [`write_tensor`]. The learning rates are not part
/// of the file and are supplied by the caller.
pub fn read_tensor<R: Read>(mut r: R, alpha: f64, beta: f64) -> Result<PayoffTensor> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format("not a payoff tensor file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let players = read_u32(&mut r)? as usize;
    let actions = read_u32(&mut r)? as usize;
    let gamma = f64::from_le_bytes(read_array(&mut r)?);
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let params = GameParams::new(players, actions, alpha, beta, gamma, seed)?;
    let len = actions.pow(players as u32);
    let mut tables = Vec::with_capacity(players);
    for _ in 0..players {
        let mut table = Vec::with_capacity(len);
        for _ in 0..len {
            table.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        tables.push(table);
    }
    PayoffTensor::from_tables(&params, tables)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub(crate) fn read_array<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("truncated file".into())
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf)
}

/// One CSV row per action tuple (lexicographic order), at most `max_rows`
/// rows: `tuple,i1..ip,payoff1..payoffp`.
pub fn write_entries_csv<W: Write>(tensor: &PayoffTensor, max_rows: usize, mut w: W) -> Result<()> {
    let p = tensor.players();
    let n = tensor.actions();
    let mut header = vec!["tuple".to_string()];
    header.extend((1..=p).map(|k| format!("i{k}")));
    header.extend((1..=p).map(|k| format!("payoff{k}")));
    writeln!(w, "{}", header.join(","))?;

    let total = n.pow(p as u32);
    let mut tuple = vec![0usize; p];
    for row in 0..total.min(max_rows) {
        let mut idx = row;
        for pos in (0..p).rev() {
            tuple[pos] = idx % n;
            idx /= n;
        }
        let mut fields = vec![row.to_string()];
        fields.extend(tuple.iter().map(|i| (i + 1).to_string()));
        fields.extend((0..p).map(|mu| tensor.payoff(mu, &tuple).to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let params = GameParams::new(3, 4, 0.1, 0.05, -0.5, 17).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), 36 + 8 * 3 * 64);
        assert_eq!(&buf[..8], TENSOR_MAGIC);
        let back = read_tensor(buf.as_slice(), 0.1, 0.05).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let params = GameParams::new(2, 2, 0.1, 0.05, 0.0, 1).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(bad.as_slice(), 0.1, 0.05), Err(Error::Format(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_tensor(truncated, 0.1, 0.05), Err(Error::Format(_))));
    }

    #[test]
    fn csv_lists_tuples_in_order() {
        let params = GameParams::new(2, 3, 0.1, 0.05, -1.0, 1).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut buf = Vec::new();
        write_entries_csv(&t, 4, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "tuple,i1,i2,payoff1,payoff2");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("1,1,2,"));
    }
}
