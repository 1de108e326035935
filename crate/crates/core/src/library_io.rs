//! Versioned on-disk container for a primitive library and its
//! correspondence map.
//!
//! Layout: an 8-byte magic, a little-endian u32 format version, a
//! human-readable JSON header (vehicle params, generation config, grid
//! config, params hash), then dense little-endian binary arrays of the
//! trajectory poses and the correspondence CSR data, closed by an end
//! marker. Poses round-trip bit-exactly; derived per-point fields (time,
//! arc length) are recomputed on load through the same code path used at
//! generation time.

use crate::collision::{CorrEntry, CorrespondenceMap, DirCorrespondence, GridConfig};
use crate::kinematics::{VehicleParams, VehicleState};
use crate::primitives::{
    points_from_poses, ControlGroup, Direction, GenerationConfig, PrimitiveLibrary, StateLattice,
    Trajectory,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CAVNAVPL";
const END_MARK: &[u8; 8] = b"CAVNAVEN";

#[derive(Debug, Error)]
pub enum LibraryIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt library file: {0}")]
    Corrupt(String),
    #[error("library format version {found} does not match supported version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("library was generated for different vehicle parameters (hash {file} vs {requested})")]
    ParamsMismatch { file: String, requested: String },
}

/// Stable hex digest of the vehicle parameters and generation config.
pub fn params_hash(params: &VehicleParams, config: &GenerationConfig) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        params: &'a VehicleParams,
        config: &'a GenerationConfig,
    }
    let bytes = serde_json::to_vec(&Keyed { params, config }).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    params_hash: String,
    params: VehicleParams,
    generation: GenerationConfig,
    grid: Option<GridConfig>,
    lattice_count: u32,
    trajectory_count: u64,
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.out.write_all(&[v])
    }
    fn u16(&mut self, v: u16) -> io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
}

struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], LibraryIoError> {
        let mut buf = [0u8; N];
        self.inp
            .read_exact(&mut buf)
            .map_err(|_| LibraryIoError::Corrupt("unexpected end of file".into()))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8, LibraryIoError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, LibraryIoError> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32, LibraryIoError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, LibraryIoError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Serialize a library (and optionally its correspondence map) to a writer.
pub fn write_library<W: Write>(
    mut out: W,
    library: &PrimitiveLibrary,
    correspondence: Option<&CorrespondenceMap>,
) -> Result<(), LibraryIoError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let header = Header {
        format_version: FORMAT_VERSION,
        params_hash: params_hash(&library.params, &library.config),
        params: library.params.clone(),
        generation: library.config.clone(),
        grid: correspondence.map(|c| c.grid),
        lattice_count: library.lattices.len() as u32,
        trajectory_count: library.trajectory_count() as u64,
    };
    let header_bytes = serde_json::to_vec_pretty(&header).expect("serializable");
    out.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    out.write_all(b"\n")?;

    let mut w = Writer { out };
    w.u32(library.lattices.len() as u32)?;
    for lattice in &library.lattices {
        w.u16(lattice.id)?;
        w.f64(lattice.articulation)?;
        for direction in Direction::ALL {
            let groups = lattice.groups(direction);
            w.u32(groups.len() as u32)?;
            for group in groups {
                w.u16(group.id)?;
                w.f64(group.speed)?;
                w.f64(group.initial_rate)?;
                w.u32(group.shared_prefix_end as u32)?;
                w.u32(group.trajectories.len() as u32)?;
                for traj in &group.trajectories {
                    w.u16(traj.id)?;
                    w.u32(traj.points.len() as u32)?;
                    w.u32(traj.split_indices[0] as u32)?;
                    w.u32(traj.split_indices[1] as u32)?;
                    for r in traj.rate_schedule {
                        w.f64(r)?;
                    }
                    for p in &traj.points {
                        w.f64(p.pose.x)?;
                        w.f64(p.pose.y)?;
                        w.f64(p.pose.heading)?;
                        w.f64(p.pose.articulation)?;
                    }
                }
            }
        }
    }

    match correspondence {
        None => w.u8(0)?,
        Some(corr) => {
            w.u8(1)?;
            w.f64(corr.grid.cell_size)?;
            w.f64(corr.grid.extent)?;
            w.u32(corr.lattices.len() as u32)?;
            for pair in &corr.lattices {
                for dir_corr in pair {
                    w.u32(dir_corr.trajectory_count)?;
                    w.u32(dir_corr.cell_start.len() as u32)?;
                    for &o in &dir_corr.cell_start {
                        w.u32(o)?;
                    }
                    w.u32(dir_corr.entries.len() as u32)?;
                    for e in &dir_corr.entries {
                        w.u16(e.trajectory)?;
                        w.u16(e.point)?;
                    }
                }
            }
        }
    }
    w.out.write_all(END_MARK)?;
    Ok(())
}

/// Parse a library from a reader.
pub fn read_library<R: Read>(
    inp: R,
) -> Result<(PrimitiveLibrary, Option<CorrespondenceMap>), LibraryIoError> {
    let mut r = Reader { inp };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != MAGIC {
        return Err(LibraryIoError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(LibraryIoError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = r.u32()? as usize;
    if header_len > 16 << 20 {
        return Err(LibraryIoError::Corrupt("oversized header".into()));
    }
    let mut header_bytes = vec![0u8; header_len + 1];
    r.inp
        .read_exact(&mut header_bytes)
        .map_err(|_| LibraryIoError::Corrupt("unexpected end of file".into()))?;
    header_bytes.pop();
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| LibraryIoError::Corrupt(format!("bad header: {e}")))?;

    let lattice_count = r.u32()? as usize;
    if lattice_count != header.lattice_count as usize {
        return Err(LibraryIoError::Corrupt("lattice count mismatch".into()));
    }
    let sample_dt = header.generation.sample_dt;
    let mut lattices = Vec::with_capacity(lattice_count);
    for _ in 0..lattice_count {
        let id = r.u16()?;
        let articulation = r.f64()?;
        let mut per_direction = Vec::with_capacity(2);
        for direction in Direction::ALL {
            let n_groups = r.u32()? as usize;
            if n_groups > 1 << 16 {
                return Err(LibraryIoError::Corrupt("implausible group count".into()));
            }
            let mut groups = Vec::with_capacity(n_groups);
            for _ in 0..n_groups {
                let gid = r.u16()?;
                let speed = r.f64()?;
                let initial_rate = r.f64()?;
                let shared_prefix_end = r.u32()? as usize;
                let n_traj = r.u32()? as usize;
                if n_traj > 1 << 20 {
                    return Err(LibraryIoError::Corrupt("implausible trajectory count".into()));
                }
                let mut trajectories = Vec::with_capacity(n_traj);
                for _ in 0..n_traj {
                    let tid = r.u16()?;
                    let n_points = r.u32()? as usize;
                    if n_points > 1 << 24 {
                        return Err(LibraryIoError::Corrupt("implausible point count".into()));
                    }
                    let s1 = r.u32()? as usize;
                    let s2 = r.u32()? as usize;
                    let rate_schedule = [r.f64()?, r.f64()?, r.f64()?];
                    let mut poses = Vec::with_capacity(n_points);
                    for _ in 0..n_points {
                        let x = r.f64()?;
                        let y = r.f64()?;
                        let heading = r.f64()?;
                        let articulation = r.f64()?;
                        poses.push(VehicleState {
                            x,
                            y,
                            heading,
                            articulation,
                        });
                    }
                    trajectories.push(Trajectory {
                        id: tid,
                        direction,
                        points: points_from_poses(&poses, speed, sample_dt),
                        split_indices: [s1, s2],
                        rate_schedule,
                    });
                }
                groups.push(ControlGroup {
                    id: gid,
                    speed,
                    initial_rate,
                    shared_prefix_end,
                    trajectories,
                });
            }
            per_direction.push(groups);
        }
        let backward = per_direction.pop().unwrap();
        let forward = per_direction.pop().unwrap();
        lattices.push(StateLattice {
            id,
            articulation,
            forward,
            backward,
        });
    }

    let correspondence = match r.u8()? {
        0 => None,
        1 => {
            let cell_size = r.f64()?;
            let extent = r.f64()?;
            let grid = GridConfig { cell_size, extent };
            let n = r.u32()? as usize;
            if n != lattice_count {
                return Err(LibraryIoError::Corrupt(
                    "correspondence lattice count mismatch".into(),
                ));
            }
            let mut maps = Vec::with_capacity(n);
            for _ in 0..n {
                let mut pair = Vec::with_capacity(2);
                for _ in 0..2 {
                    let trajectory_count = r.u32()?;
                    let n_offsets = r.u32()? as usize;
                    if n_offsets != grid.cell_count() + 1 {
                        return Err(LibraryIoError::Corrupt("offset table size mismatch".into()));
                    }
                    let mut cell_start = Vec::with_capacity(n_offsets);
                    for _ in 0..n_offsets {
                        cell_start.push(r.u32()?);
                    }
                    let n_entries = r.u32()? as usize;
                    if *cell_start.last().unwrap() as usize != n_entries {
                        return Err(LibraryIoError::Corrupt("entry count mismatch".into()));
                    }
                    let mut entries = Vec::with_capacity(n_entries);
                    for _ in 0..n_entries {
                        let trajectory = r.u16()?;
                        let point = r.u16()?;
                        entries.push(CorrEntry { trajectory, point });
                    }
                    pair.push(DirCorrespondence {
                        trajectory_count,
                        cell_start,
                        entries,
                    });
                }
                let b = pair.pop().unwrap();
                let f = pair.pop().unwrap();
                maps.push([f, b]);
            }
            Some(CorrespondenceMap {
                grid,
                lattices: maps,
            })
        }
        other => {
            return Err(LibraryIoError::Corrupt(format!(
                "bad correspondence marker {other}"
            )))
        }
    };

    let end: [u8; 8] = r.bytes()?;
    if &end != END_MARK {
        return Err(LibraryIoError::Corrupt("missing end marker".into()));
    }
    let library = PrimitiveLibrary {
        params: header.params,
        config: header.generation,
        lattices,
    };
    Ok((library, correspondence))
}

pub fn save_library(
    path: &Path,
    library: &PrimitiveLibrary,
    correspondence: Option<&CorrespondenceMap>,
) -> Result<(), LibraryIoError> {
    let file = std::fs::File::create(path)?;
    let mut buf = io::BufWriter::new(file);
    write_library(&mut buf, library, correspondence)?;
    buf.flush()?;
    Ok(())
}

pub fn load_library(
    path: &Path,
) -> Result<(PrimitiveLibrary, Option<CorrespondenceMap>), LibraryIoError> {
    let file = std::fs::File::open(path)?;
    read_library(io::BufReader::new(file))
}

/// Reject a library whose parameter hash differs from the hash of the
/// requested params under the library's own generation config.
pub fn verify_params(
    library: &PrimitiveLibrary,
    requested: &VehicleParams,
) -> Result<(), LibraryIoError> {
    let file = params_hash(&library.params, &library.config);
    let want = params_hash(requested, &library.config);
    if file != want {
        return Err(LibraryIoError::ParamsMismatch {
            file,
            requested: want,
        });
    }
    Ok(())
}
