//! On-disk formats: trajectories as CSV (`t,x1,...,xN`) or a compact
//! binary layout, plus JSON helpers for serde-serializable reports.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::simulate::Trajectory;

/// Leading bytes of the binary trajectory format.
pub const TRAJECTORY_MAGIC: &[u8; 8] = b"LFRTRAJ1";

/// Render a trajectory as CSV with header `t,x1,...,xN`. Floats are
/// written in shortest round-trip form, so values survive a save/load
/// cycle bit for bit.
pub fn trajectory_to_csv_string(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for i in 1..=traj.n_followers() {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (t, row) in traj.rows().enumerate() {
        out.push_str(&format!("{t}"));
        for v in row {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

/// Parse CSV bytes produced by [`trajectory_to_csv_string`]. The header
/// must read `t,x1,...,xN`, the time column must count up from 0, and
/// every value must be a finite float.
pub fn parse_trajectory_csv(bytes: &[u8]) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse(
            "header must list a time column and at least one follower".into(),
        ));
    }
    if &headers[0] != "t" {
        return Err(Error::Parse(format!(
            "first column must be named 't', got {:?}",
            &headers[0]
        )));
    }
    let n_followers = headers.len() - 1;
    for (i, name) in headers.iter().skip(1).enumerate() {
        let expected = format!("x{}", i + 1);
        if name != expected {
            return Err(Error::Parse(format!(
                "column {} must be named {expected:?}, got {name:?}",
                i + 1
            )));
        }
    }

    let mut data = Vec::new();
    let mut next_t: u64 = 0;
    for record in reader.records() {
        let record = record?;
        if record.len() != n_followers + 1 {
            return Err(Error::Parse(format!(
                "row {next_t} has {} fields, expected {}",
                record.len(),
                n_followers + 1
            )));
        }
        let t: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad time value {:?}", &record[0])))?;
        if t != next_t {
            return Err(Error::Parse(format!(
                "time column must count up from 0: got {t}, expected {next_t}"
            )));
        }
        next_t += 1;
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad float {field:?}")))?;
            data.push(v);
        }
    }
    Trajectory::from_rows(data, next_t as usize, n_followers)
}

pub fn save_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, trajectory_to_csv_string(traj))?)
}

pub fn load_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory_csv(&std::fs::read(path)?)
}

/// Serialize a trajectory into the binary layout: the magic, two u64
/// little-endian dimensions (steps, followers), then row-major f64
/// little-endian values.
pub fn trajectory_to_bytes(traj: &Trajectory) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + traj.data().len() * 8);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&(traj.n_steps() as u64).to_le_bytes());
    out.extend_from_slice(&(traj.n_followers() as u64).to_le_bytes());
    for v in traj.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse the binary trajectory layout. The payload length is checked
/// against the declared dimensions before anything is allocated.
pub fn parse_trajectory_binary(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.len() < 24 {
        return Err(Error::Parse("truncated trajectory header".into()));
    }
    if &bytes[..8] != TRAJECTORY_MAGIC {
        return Err(Error::Parse("bad trajectory magic".into()));
    }
    let n_steps = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let n_followers = u64::from_le_bytes(bytes[16..24].try_into().expect("8-byte slice"));
    let n_steps: usize = n_steps
        .try_into()
        .map_err(|_| Error::Parse("step count does not fit in memory".into()))?;
    let n_followers: usize = n_followers
        .try_into()
        .map_err(|_| Error::Parse("column count does not fit in memory".into()))?;
    let n_values = n_steps
        .checked_mul(n_followers)
        .ok_or_else(|| Error::Parse("trajectory size overflows".into()))?;
    let expected_bytes = n_values
        .checked_mul(8)
        .ok_or_else(|| Error::Parse("trajectory size overflows".into()))?;
    if bytes.len() - 24 != expected_bytes {
        return Err(Error::Parse(format!(
            "payload is {} bytes, expected {expected_bytes}",
            bytes.len() - 24
        )));
    }
    let mut data = Vec::with_capacity(n_values);
    for chunk in bytes[24..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    Trajectory::from_rows(data, n_steps, n_followers)
}

pub fn save_trajectory_binary(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, trajectory_to_bytes(traj))?)
}

pub fn load_trajectory_binary(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory_binary(&std::fs::read(path)?)
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Serde adapter for `DMatrix<f64>` fields: `{rows, cols, data}` with
/// row-major data. Use as `#[serde(with = "crate::io::matrix_serde")]`.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct MatrixDto {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(
        m: &DMatrix<f64>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixDto {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<DMatrix<f64>, D::Error> {
        let dto = MatrixDto::deserialize(deserializer)?;
        let expected = dto
            .rows
            .checked_mul(dto.cols)
            .ok_or_else(|| serde::de::Error::custom("matrix size overflows"))?;
        if dto.data.len() != expected {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {expected}",
                dto.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(dto.rows, dto.cols, &dto.data))
    }
}

/// Serde adapter for `Vec<DMatrix<f64>>` fields, one row-major block per
/// entry.
pub mod matrix_vec_serde {
    use nalgebra::DMatrix;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Serialize, Deserialize)]
    struct MatrixDto {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(
        ms: &[DMatrix<f64>],
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(ms.len()))?;
        for m in ms {
            let mut data = Vec::with_capacity(m.len());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    data.push(m[(i, j)]);
                }
            }
            seq.serialize_element(&MatrixDto {
                rows: m.nrows(),
                cols: m.ncols(),
                data,
            })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        let dtos = Vec::<MatrixDto>::deserialize(deserializer)?;
        dtos.into_iter()
            .map(|dto| {
                let expected = dto
                    .rows
                    .checked_mul(dto.cols)
                    .ok_or_else(|| serde::de::Error::custom("matrix size overflows"))?;
                if dto.data.len() != expected {
                    return Err(serde::de::Error::custom(format!(
                        "matrix data has {} entries, expected {expected}",
                        dto.data.len()
                    )));
                }
                Ok(DMatrix::from_row_slice(dto.rows, dto.cols, &dto.data))
            })
            .collect()
    }
}
