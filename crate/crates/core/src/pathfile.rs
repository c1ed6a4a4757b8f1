//! On-disk format for filter banks: acoustic scenes, cross-path
//! compensation banks, and control filter sets.
//!
//! A file is a short ASCII header followed by a raw block of little-endian
//! `f64` values:
//!
//! ```text
//! ancpaths 1
//! k <nodes>
//! block <role> <count> <len>
//! ...
//! data
//! <count * len * 8 bytes per block, row-major, in header order>
//! ```
//!
//! The header names each block of filters (`primary`, `secondary`,
//! `estimate`, `compensation`, `control`) with its row count and row
//! length; the payload carries the taps bit-exactly, so a save/load
//! round trip reproduces every coefficient.

use crate::compensation::{CompensationBank, CompError};
use crate::controllers::{ControlError, ControlFilterSet};
use crate::dsp::TapVector;
use crate::scene::{AcousticScene, SceneError};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "ancpaths 1";

#[derive(Debug, Error)]
pub enum PathFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed path file: {0}")]
    Format(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Compensation(#[from] CompError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

fn format_err(msg: impl Into<String>) -> PathFileError {
    PathFileError::Format(msg.into())
}

/// One named group of equal-length filters.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub role: String,
    pub rows: Vec<Vec<f64>>,
}

impl Block {
    fn row_len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Writes `blocks` for a `nodes`-channel system. Rows within a block must
/// share one length and hold only finite values.
pub fn write_blocks(path: &Path, nodes: usize, blocks: &[Block]) -> Result<(), PathFileError> {
    if nodes == 0 {
        return Err(format_err("node count must be positive"));
    }
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("k {nodes}\n"));
    for block in blocks {
        let len = block.row_len();
        if block.rows.is_empty() || len == 0 {
            return Err(format_err(format!("block {} is empty", block.role)));
        }
        if block.role.is_empty() || block.role.contains(char::is_whitespace) {
            return Err(format_err(format!("bad block role {:?}", block.role)));
        }
        for row in &block.rows {
            if row.len() != len {
                return Err(format_err(format!(
                    "block {} mixes row lengths {} and {}",
                    block.role,
                    len,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format_err(format!("block {} holds a non-finite value", block.role)));
            }
        }
        header.push_str(&format!("block {} {} {}\n", block.role, block.rows.len(), len));
    }
    header.push_str("data\n");

    let mut out = Vec::with_capacity(
        header.len() + blocks.iter().map(|b| b.rows.len() * b.row_len() * 8).sum::<usize>(),
    );
    out.extend_from_slice(header.as_bytes());
    for block in blocks {
        for row in &block.rows {
            for value in row {
                out.extend_from_slice(&value.to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a file written by [`write_blocks`], checking the payload length
/// byte for byte against the header.
pub fn read_blocks(path: &Path) -> Result<(usize, Vec<Block>), PathFileError> {
    let bytes = fs::read(path)?;
    let mut cursor = 0usize;
    let mut lines: Vec<String> = Vec::new();
    loop {
        let rest = &bytes[cursor..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err("header never reaches its data marker"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| format_err("header is not valid text"))?
            .trim()
            .to_string();
        cursor += nl + 1;
        if line == "data" {
            break;
        }
        lines.push(line);
        if lines.len() > 4096 {
            return Err(format_err("header is implausibly long"));
        }
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(format_err(format!("expected `{MAGIC}` on the first line")));
    }
    let nodes: usize = lines
        .get(1)
        .and_then(|l| l.strip_prefix("k "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| format_err("second line must be `k <nodes>`"))?;
    if nodes == 0 {
        return Err(format_err("node count must be positive"));
    }

    let mut shapes: Vec<(String, usize, usize)> = Vec::new();
    for line in &lines[2..] {
        let mut parts = line.split_whitespace();
        let (Some("block"), Some(role), Some(count), Some(len), None) = (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        ) else {
            return Err(format_err(format!("bad header line `{line}`")));
        };
        let count: usize = count
            .parse()
            .map_err(|_| format_err(format!("bad row count in `{line}`")))?;
        let len: usize = len
            .parse()
            .map_err(|_| format_err(format!("bad row length in `{line}`")))?;
        if count == 0 || len == 0 {
            return Err(format_err(format!("empty block in `{line}`")));
        }
        shapes.push((role.to_string(), count, len));
    }

    let expected: usize = shapes.iter().map(|(_, c, l)| c * l * 8).sum();
    let payload = &bytes[cursor..];
    if payload.len() != expected {
        return Err(format_err(format!(
            "payload holds {} bytes but the header promises {expected}",
            payload.len()
        )));
    }

    let mut blocks = Vec::with_capacity(shapes.len());
    let mut offset = 0usize;
    for (role, count, len) in shapes {
        let mut rows = Vec::with_capacity(count);
        for row_idx in 0..count {
            let mut row = Vec::with_capacity(len);
            for _ in 0..len {
                let raw: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
                let value = f64::from_le_bytes(raw);
                if !value.is_finite() {
                    return Err(format_err(format!(
                        "non-finite value in block {role}, row {row_idx}"
                    )));
                }
                row.push(value);
                offset += 8;
            }
            rows.push(row);
        }
        blocks.push(Block { role, rows });
    }
    Ok((nodes, blocks))
}

fn taps_rows(filters: &[TapVector]) -> Vec<Vec<f64>> {
    filters.iter().map(|t| t.as_slice().to_vec()).collect()
}

fn grid_rows(grid: impl Iterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    grid.collect()
}

fn find_block<'a>(
    blocks: &'a [Block],
    role: &str,
) -> Result<&'a Block, PathFileError> {
    let mut found = None;
    for block in blocks {
        if block.role == role {
            if found.is_some() {
                return Err(format_err(format!("block {role} appears twice")));
            }
            found = Some(block);
        }
    }
    found.ok_or_else(|| format_err(format!("missing block {role}")))
}

fn rows_to_taps(rows: &[Vec<f64>]) -> Result<Vec<TapVector>, PathFileError> {
    rows.iter()
        .map(|r| TapVector::new(r.clone()).map_err(|e| format_err(e.to_string())))
        .collect()
}

fn rows_to_grid(rows: &[Vec<f64>], nodes: usize) -> Result<Vec<Vec<TapVector>>, PathFileError> {
    if rows.len() != nodes * nodes {
        return Err(format_err(format!(
            "grid block holds {} rows, expected {}",
            rows.len(),
            nodes * nodes
        )));
    }
    let mut grid = Vec::with_capacity(nodes);
    for mic in 0..nodes {
        let row = rows_to_taps(&rows[mic * nodes..(mic + 1) * nodes])?;
        grid.push(row);
    }
    Ok(grid)
}

/// Saves a scene's primary paths, true secondary paths, and secondary-path
/// estimates. Grid blocks are row-major: microphone outer, speaker inner.
pub fn save_scene(path: &Path, scene: &AcousticScene) -> Result<(), PathFileError> {
    let k = scene.nodes();
    let secondary = grid_rows(
        (0..k).flat_map(|m| (0..k).map(move |s| scene.secondary(m, s).as_slice().to_vec())),
    );
    let estimate = grid_rows(
        (0..k).flat_map(|m| (0..k).map(move |s| scene.estimate(m, s).as_slice().to_vec())),
    );
    let blocks = [
        Block {
            role: "primary".into(),
            rows: (0..k).map(|m| scene.primary(m).as_slice().to_vec()).collect(),
        },
        Block {
            role: "secondary".into(),
            rows: secondary,
        },
        Block {
            role: "estimate".into(),
            rows: estimate,
        },
    ];
    write_blocks(path, k, &blocks)
}

/// Loads a scene saved by [`save_scene`], re-validating its geometry.
pub fn load_scene(path: &Path) -> Result<AcousticScene, PathFileError> {
    let (nodes, blocks) = read_blocks(path)?;
    let primary = rows_to_taps(&find_block(&blocks, "primary")?.rows)?;
    if primary.len() != nodes {
        return Err(format_err(format!(
            "primary block holds {} rows, expected {nodes}",
            primary.len()
        )));
    }
    let secondary = rows_to_grid(&find_block(&blocks, "secondary")?.rows, nodes)?;
    let estimate = rows_to_grid(&find_block(&blocks, "estimate")?.rows, nodes)?;
    Ok(AcousticScene::new(primary, secondary, estimate)?)
}

/// Saves a compensation bank as one `nodes * nodes` grid block; diagonal
/// rows carry the bank's fixed unit-impulse placeholders.
pub fn save_compensation(path: &Path, bank: &CompensationBank) -> Result<(), PathFileError> {
    let k = bank.nodes();
    let rows = grid_rows(
        (0..k).flat_map(|m| (0..k).map(move |s| bank.get(m, s).as_slice().to_vec())),
    );
    write_blocks(
        path,
        k,
        &[Block {
            role: "compensation".into(),
            rows,
        }],
    )
}

/// Loads a compensation bank, checking that every diagonal row still holds
/// the unit impulse a bank is constructed with.
pub fn load_compensation(path: &Path) -> Result<CompensationBank, PathFileError> {
    let (nodes, blocks) = read_blocks(path)?;
    let block = find_block(&blocks, "compensation")?;
    if block.rows.len() != nodes * nodes {
        return Err(format_err(format!(
            "compensation block holds {} rows, expected {}",
            block.rows.len(),
            nodes * nodes
        )));
    }
    let len = block.row_len();
    let mut bank = CompensationBank::new(nodes, len)?;
    for mic in 0..nodes {
        for spk in 0..nodes {
            let row = &block.rows[mic * nodes + spk];
            if mic == spk {
                if row != bank.get(mic, spk).as_slice() {
                    return Err(format_err(format!(
                        "diagonal row ({mic}, {spk}) is not a unit impulse"
                    )));
                }
            } else {
                bank.set(mic, spk, TapVector::new(row.clone()).map_err(|e| format_err(e.to_string()))?)?;
            }
        }
    }
    Ok(bank)
}

/// Saves the adaptive control filters, one row per node.
pub fn save_control(path: &Path, filters: &ControlFilterSet) -> Result<(), PathFileError> {
    let rows = taps_rows(
        &(0..filters.nodes())
            .map(|k| TapVector::new(filters.node(k).to_vec()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format_err(e.to_string()))?,
    );
    write_blocks(
        path,
        filters.nodes(),
        &[Block {
            role: "control".into(),
            rows,
        }],
    )
}

/// Loads control filters saved by [`save_control`].
pub fn load_control(path: &Path) -> Result<ControlFilterSet, PathFileError> {
    let (nodes, blocks) = read_blocks(path)?;
    let block = find_block(&blocks, "control")?;
    if block.rows.len() != nodes {
        return Err(format_err(format!(
            "control block holds {} rows, expected {nodes}",
            block.rows.len()
        )));
    }
    Ok(ControlFilterSet::from_taps(block.rows.clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synthesize_scene, SceneRecipe};

    fn scratch(name: &str) -> tempfile::TempDir {
        tempfile::Builder::new().prefix(name).tempdir().unwrap()
    }

    #[test]
    fn test_scene_round_trip_is_bit_exact() {
        let dir = scratch("scene-rt");
        let file = dir.path().join("scene.anc");
        let mut synth = synthesize_scene(&SceneRecipe::new(11, 3, 48)).unwrap();
        // Perturbed estimates make the payload full of irrational values.
        synth.scene.perturb_estimates(0.05, 99).unwrap();
        save_scene(&file, &synth.scene).unwrap();
        let loaded = load_scene(&file).unwrap();
        assert_eq!(loaded.nodes(), 3);
        for m in 0..3 {
            assert_eq!(
                loaded.primary(m).as_slice(),
                synth.scene.primary(m).as_slice(),
                "primary path {m} changed across the round trip"
            );
            for s in 0..3 {
                assert_eq!(loaded.secondary(m, s).as_slice(), synth.scene.secondary(m, s).as_slice());
                assert_eq!(loaded.estimate(m, s).as_slice(), synth.scene.estimate(m, s).as_slice());
            }
        }
    }

    #[test]
    fn test_compensation_round_trip_is_bit_exact() {
        let dir = scratch("bank-rt");
        let file = dir.path().join("bank.anc");
        let mut bank = CompensationBank::new(2, 5).unwrap();
        bank.set(0, 1, TapVector::new(vec![0.1, -0.25, 1.0 / 3.0, 0.0, 7e-3]).unwrap())
            .unwrap();
        bank.set(1, 0, TapVector::new(vec![-1.5, 0.0, 0.0, 2f64.sqrt(), 0.5]).unwrap())
            .unwrap();
        save_compensation(&file, &bank).unwrap();
        let loaded = load_compensation(&file).unwrap();
        for m in 0..2 {
            for s in 0..2 {
                assert_eq!(loaded.get(m, s).as_slice(), bank.get(m, s).as_slice());
            }
        }
    }

    #[test]
    fn test_control_round_trip_is_bit_exact() {
        let dir = scratch("ctl-rt");
        let file = dir.path().join("filters.anc");
        let mut filters = ControlFilterSet::zeros(2, 4);
        filters.node_mut(0).copy_from_slice(&[1.0, -0.5, 0.25, std::f64::consts::PI]);
        filters.node_mut(1).copy_from_slice(&[0.0, 1e-300, -3.25, 0.125]);
        save_control(&file, &filters).unwrap();
        let loaded = load_control(&file).unwrap();
        assert_eq!(loaded.node(0), filters.node(0));
        assert_eq!(loaded.node(1), filters.node(1));
    }

    #[test]
    fn test_header_is_readable_text_and_payload_is_little_endian() {
        let dir = scratch("layout");
        let file = dir.path().join("one.anc");
        let filters = {
            let mut f = ControlFilterSet::zeros(1, 2);
            f.node_mut(0).copy_from_slice(&[1.0, -2.0]);
            f
        };
        save_control(&file, &filters).unwrap();
        let bytes = fs::read(&file).unwrap();
        let header = b"ancpaths 1\nk 1\nblock control 1 2\ndata\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..header.len() + 8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[header.len() + 8..], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn test_truncated_payload_is_rejected() {
        let dir = scratch("trunc");
        let file = dir.path().join("scene.anc");
        let synth = synthesize_scene(&SceneRecipe::new(5, 2, 32)).unwrap();
        save_scene(&file, &synth.scene).unwrap();
        let bytes = fs::read(&file).unwrap();
        fs::write(&file, &bytes[..bytes.len() - 7]).unwrap();
        let err = load_scene(&file).unwrap_err();
        assert!(matches!(err, PathFileError::Format(_)), "got {err:?}");
    }

    #[test]
    fn test_trailing_bytes_are_rejected() {
        let dir = scratch("trail");
        let file = dir.path().join("scene.anc");
        let synth = synthesize_scene(&SceneRecipe::new(5, 2, 32)).unwrap();
        save_scene(&file, &synth.scene).unwrap();
        let mut bytes = fs::read(&file).unwrap();
        bytes.extend_from_slice(&[0u8; 3]);
        fs::write(&file, &bytes).unwrap();
        assert!(load_scene(&file).is_err());
    }

    #[test]
    fn test_bad_magic_is_rejected() {
        let dir = scratch("magic");
        let file = dir.path().join("bad.anc");
        fs::write(&file, b"ancpaths 2\nk 1\nblock control 1 1\ndata\n\0\0\0\0\0\0\0\0").unwrap();
        let err = read_blocks(&file).unwrap_err();
        assert!(err.to_string().contains("ancpaths 1"), "got {err}");
    }

    #[test]
    fn test_wrong_grid_shape_is_rejected() {
        let dir = scratch("shape");
        let file = dir.path().join("bank.anc");
        // Three rows cannot be a 2x2 grid.
        let rows = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        write_blocks(&file, 2, &[Block { role: "compensation".into(), rows }]).unwrap();
        assert!(load_compensation(&file).is_err());
    }

    #[test]
    fn test_non_finite_payload_is_rejected() {
        let dir = scratch("nan");
        let file = dir.path().join("bad.anc");
        let mut out = b"ancpaths 1\nk 1\nblock control 1 1\ndata\n".to_vec();
        out.extend_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&file, &out).unwrap();
        assert!(read_blocks(&file).is_err());
    }

    #[test]
    fn test_geometry_is_revalidated_on_load() {
        let dir = scratch("geom");
        let file = dir.path().join("scene.anc");
        // Cross path (mic 0 <- spk 1) arrives before spk 1's own mic path,
        // which no physical layout allows.
        let primary = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let own = vec![0.0, 1.0];
        let early_cross = vec![1.0, 0.0];
        let zero = vec![0.0, 0.1];
        let secondary = vec![own.clone(), early_cross, zero, own];
        let blocks = [
            Block { role: "primary".into(), rows: primary },
            Block { role: "secondary".into(), rows: secondary.clone() },
            Block { role: "estimate".into(), rows: secondary },
        ];
        write_blocks(&file, 2, &blocks).unwrap();
        let err = load_scene(&file).unwrap_err();
        assert!(matches!(err, PathFileError::Scene(_)), "got {err:?}");
    }

    #[test]
    fn test_duplicate_and_missing_blocks_are_rejected() {
        let dir = scratch("dup");
        let file = dir.path().join("odd.anc");
        let rows = vec![vec![1.0]];
        let twice = [
            Block { role: "control".into(), rows: rows.clone() },
            Block { role: "control".into(), rows: rows.clone() },
        ];
        write_blocks(&file, 1, &twice).unwrap();
        assert!(load_control(&file).is_err());

        write_blocks(&file, 1, &[Block { role: "primary".into(), rows }]).unwrap();
        assert!(load_control(&file).is_err());
    }
}
