//! Triplet generation, splits and the `OSDS` dataset file.
//!
//! Layout (little-endian): magic `OSDS`, version u32, query_size u32,
//! target_size u32, class_count u32, record_count u64, then `class_count`
//! 48-byte class entries, then fixed-size records:
//! class_id u32, scene_seed u64, query (q*q*3), target (t*t*3), mask (t*t).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::glyph::{LogoClass, Variation, CLASS_ENTRY_SIZE};
use crate::synth::scene::{render_scene, SceneParams};

pub const MAGIC: &[u8; 4] = b"OSDS";
pub const VERSION: u32 = 1;
const FIXED_HEADER: usize = 4 + 4 + 4 + 4 + 4 + 8;

/// Everything besides the class table that determines generated bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub query_size: usize,
    pub scene: SceneParams,
    pub variation: Variation,
}

impl GenParams {
    pub fn desk() -> Self {
        GenParams {
            query_size: 16,
            scene: SceneParams::new(64, 0.25, 0.6, 1),
            variation: Variation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub class_id: u32,
    pub scene_seed: u64,
    pub query: Vec<u8>,
    pub target: Vec<u8>,
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFile {
    pub query_size: usize,
    pub target_size: usize,
    pub classes: Vec<LogoClass>,
    pub records: Vec<Triplet>,
}

/// Fixed dataset dimensions shared by writer and reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub query_size: usize,
    pub target_size: usize,
}

impl Layout {
    pub fn record_size(&self) -> usize {
        4 + 8 + self.query_size.pow(2) * 3 + self.target_size.pow(2) * 4
    }

    pub fn header_size(&self, class_count: usize) -> usize {
        FIXED_HEADER + class_count * CLASS_ENTRY_SIZE
    }
}

/// Triplets for `n_classes` classes with `n` images each: `n (n - 1)` per class.
pub fn triplet_count(n_classes: usize, n: usize) -> Result<u64> {
    if n < 2 {
        return Err(Error::invalid(format!("images per class must be >= 2, got {n}")));
    }
    Ok(n_classes as u64 * n as u64 * (n as u64 - 1))
}

/// Seed of image `index` of `class_id`, mixed with splitmix64.
pub fn instance_seed(seed: u64, class_id: u32, index: usize) -> u64 {
    let mut z = seed
        ^ (class_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streams triplets in order class -> query image j -> target image k != j.
/// The query is a clean render of instance j; the target is the scene of
/// instance k.
pub fn for_each_triplet(
    classes: &[LogoClass],
    n: usize,
    seed: u64,
    params: &GenParams,
    mut sink: impl FnMut(Triplet) -> Result<()>,
) -> Result<()> {
    triplet_count(classes.len(), n)?;
    params.scene.validate()?;
    for class in classes {
        let seeds: Vec<u64> = (0..n).map(|i| instance_seed(seed, class.class_id, i)).collect();
        let variants: Vec<LogoClass> = seeds
            .iter()
            .map(|&s| class.variant(s ^ 0x5EED, &params.variation))
            .collect();
        let queries: Vec<Vec<u8>> = variants
            .iter()
            .map(|v| v.render_query(params.query_size))
            .collect();
        let scenes = variants
            .iter()
            .zip(&seeds)
            .map(|(v, &s)| render_scene(v, s, &params.scene))
            .collect::<Result<Vec<_>>>()?;
        for (j, query) in queries.iter().enumerate() {
            for (k, scene) in scenes.iter().enumerate() {
                if k == j {
                    continue;
                }
                sink(Triplet {
                    class_id: class.class_id,
                    scene_seed: seeds[k],
                    query: query.clone(),
                    target: scene.target.clone(),
                    mask: scene.mask.clone(),
                })?;
            }
        }
    }
    Ok(())
}

pub fn gen_triplets(classes: &[LogoClass], n: usize, seed: u64, params: &GenParams) -> Result<DatasetFile> {
    let mut records = Vec::with_capacity(triplet_count(classes.len(), n)? as usize);
    for_each_triplet(classes, n, seed, params, |t| {
        records.push(t);
        Ok(())
    })?;
    Ok(DatasetFile {
        query_size: params.query_size,
        target_size: params.scene.target_size,
        classes: classes.to_vec(),
        records,
    })
}

/// Seeded 90/10 split of `n_records` indices; validation gets `floor(n / 10)`.
/// Both halves are returned in ascending order.
pub fn split_train_val(n_records: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_records).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n_records / 10;
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Seeded class-disjoint split; class ids are kept.
pub fn split_one_shot(
    classes: &[LogoClass],
    seed: u64,
    train_count: usize,
) -> Result<(Vec<LogoClass>, Vec<LogoClass>)> {
    if train_count >= classes.len() {
        return Err(Error::invalid(format!(
            "train_count {train_count} must be smaller than the {} classes",
            classes.len()
        )));
    }
    let mut idx: Vec<usize> = (0..classes.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut tr, mut te) = (idx[..train_count].to_vec(), idx[train_count..].to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    let pick = |v: &[usize]| v.iter().map(|&i| classes[i].clone()).collect();
    Ok((pick(&tr), pick(&te)))
}

impl DatasetFile {
    pub fn layout(&self) -> Layout {
        Layout {
            query_size: self.query_size,
            target_size: self.target_size,
        }
    }

    /// Copy restricted to the given record indices.
    pub fn subset(&self, indices: &[usize]) -> DatasetFile {
        DatasetFile {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> DatasetFile {
        DatasetFile {
            query_size: self.query_size,
            target_size: self.target_size,
            classes: self.classes.clone(),
            records: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, self.layout(), &self.classes, self.records.len() as u64)?;
        for r in &self.records {
            write_record(w, self.layout(), r)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DatasetFile> {
        let mut cur = std::io::Cursor::new(bytes);
        let (layout, classes, count) = read_header(&mut cur, bytes.len() as u64)?;
        let records = (0..count)
            .map(|_| read_record(&mut cur, layout))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetFile {
            query_size: layout.query_size,
            target_size: layout.target_size,
            classes,
            records,
        })
    }
}

pub fn write_dataset(path: impl AsRef<Path>, data: &DatasetFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    data.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile> {
    let mut reader = DatasetReader::open(path)?;
    let records = (0..reader.len())
        .map(|i| reader.record(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetFile {
        query_size: reader.layout.query_size,
        target_size: reader.layout.target_size,
        classes: reader.classes.clone(),
        records,
    })
}

fn write_header(w: &mut impl Write, layout: Layout, classes: &[LogoClass], count: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(layout.query_size as u32).to_le_bytes())?;
    w.write_all(&(layout.target_size as u32).to_le_bytes())?;
    w.write_all(&(classes.len() as u32).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    let mut entries = Vec::with_capacity(classes.len() * CLASS_ENTRY_SIZE);
    for c in classes {
        c.encode(&mut entries);
    }
    w.write_all(&entries)?;
    Ok(())
}

fn write_record(w: &mut impl Write, layout: Layout, r: &Triplet) -> Result<()> {
    let (q, t) = (layout.query_size, layout.target_size);
    if r.query.len() != q * q * 3 || r.target.len() != t * t * 3 || r.mask.len() != t * t {
        return Err(Error::format(format!(
            "record sizes ({}, {}, {}) do not match dims q={q} t={t}",
            r.query.len(),
            r.target.len(),
            r.mask.len()
        )));
    }
    w.write_all(&r.class_id.to_le_bytes())?;
    w.write_all(&r.scene_seed.to_le_bytes())?;
    w.write_all(&r.query)?;
    w.write_all(&r.target)?;
    w.write_all(&r.mask)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("truncated dataset: {what}")))?;
    Ok(buf)
}

fn read_header(r: &mut impl Read, file_len: u64) -> Result<(Layout, Vec<LogoClass>, u64)> {
    let h = read_exact(r, FIXED_HEADER, "header")?;
    if &h[0..4] != MAGIC {
        return Err(Error::format("bad magic; not an OSDS dataset"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let layout = Layout {
        query_size: u32_at(8) as usize,
        target_size: u32_at(12) as usize,
    };
    let class_count = u32_at(16) as usize;
    let count = u64::from_le_bytes(h[20..28].try_into().unwrap());
    let expected = layout.header_size(class_count) as u64 + count * layout.record_size() as u64;
    if expected != file_len {
        return Err(Error::format(format!(
            "dataset size {file_len} does not match header ({expected} expected)"
        )));
    }
    let table = read_exact(r, class_count * CLASS_ENTRY_SIZE, "class table")?;
    let classes = table
        .chunks_exact(CLASS_ENTRY_SIZE)
        .map(LogoClass::decode)
        .collect::<Result<Vec<_>>>()?;
    Ok((layout, classes, count))
}

fn read_record(r: &mut impl Read, layout: Layout) -> Result<Triplet> {
    let head = read_exact(r, 12, "record")?;
    let (q, t) = (layout.query_size, layout.target_size);
    Ok(Triplet {
        class_id: u32::from_le_bytes(head[0..4].try_into().unwrap()),
        scene_seed: u64::from_le_bytes(head[4..12].try_into().unwrap()),
        query: read_exact(r, q * q * 3, "query")?,
        target: read_exact(r, t * t * 3, "target")?,
        mask: read_exact(r, t * t, "mask")?,
    })
}

/// Random-access reader that keeps only the header in memory.
pub struct DatasetReader {
    file: BufReader<File>,
    layout: Layout,
    classes: Vec<LogoClass>,
    count: u64,
    data_start: u64,
}

impl DatasetReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut file = BufReader::new(file);
        let (layout, classes, count) = read_header(&mut file, len)?;
        let data_start = layout.header_size(classes.len()) as u64;
        Ok(DatasetReader {
            file,
            layout,
            classes,
            count,
            data_start,
        })
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn classes(&self) -> &[LogoClass] {
        &self.classes
    }

    pub fn record(&mut self, index: usize) -> Result<Triplet> {
        if index as u64 >= self.count {
            return Err(Error::invalid(format!(
                "record {index} out of range ({} records)",
                self.count
            )));
        }
        let offset = self.data_start + index as u64 * self.layout.record_size() as u64;
        self.file.seek(SeekFrom::Start(offset))?;
        read_record(&mut self.file, self.layout)
    }
}

/// Streaming writer; the record count is fixed up front.
pub struct DatasetWriter {
    out: BufWriter<File>,
    layout: Layout,
    expected: u64,
    written: u64,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, layout: Layout, classes: &[LogoClass], count: u64) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        write_header(&mut out, layout, classes, count)?;
        Ok(DatasetWriter {
            out,
            layout,
            expected: count,
            written: 0,
        })
    }

    pub fn push(&mut self, record: &Triplet) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::invalid("more records than declared in the header"));
        }
        write_record(&mut self.out, self.layout, record)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::invalid(format!(
                "wrote {} of {} declared records",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::glyph::make_classes;

    fn small() -> DatasetFile {
        let classes = make_classes(42, 2).unwrap();
        gen_triplets(&classes, 3, 42, &GenParams::desk()).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(triplet_count(32, 70).unwrap(), 154_560);
        assert_eq!(triplet_count(1, 2).unwrap(), 2);
        assert!(triplet_count(1, 1).is_err());
        let d = small();
        assert_eq!(d.records.len(), 12);
        let (train, val) = split_train_val(154_560, 1);
        assert_eq!((train.len(), val.len()), (139_104, 15_456));
    }

    #[test]
    fn ordering_pairs_distinct_instances() {
        let d = small();
        let r = &d.records;
        assert!(r[..6].iter().all(|t| t.class_id == 0));
        assert!(r[6..].iter().all(|t| t.class_id == 1));
        for t in r {
            assert!(t.mask.contains(&255));
            assert!(t.mask.iter().all(|&m| m == 0 || m == 255));
        }
        // j = 0 with k = 1, 2; then j = 1 with k = 0, 2.
        assert_eq!(r[0].query, r[1].query);
        assert_ne!(r[0].scene_seed, r[1].scene_seed);
        assert_eq!(r[2].scene_seed, r[4].scene_seed);
    }

    #[test]
    fn byte_round_trip() {
        let d = small();
        let bytes = d.to_bytes().unwrap();
        assert_eq!(
            bytes.len(),
            d.layout().header_size(2) + 12 * d.layout().record_size()
        );
        let back = DatasetFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn reader_random_access_and_errors() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.osds");
        write_dataset(&path, &d).unwrap();
        let mut r = DatasetReader::open(&path).unwrap();
        assert_eq!(r.len(), 12);
        for i in [7, 0, 11, 3] {
            assert_eq!(r.record(i).unwrap(), d.records[i]);
        }
        assert!(r.record(12).is_err());
        assert_eq!(read_dataset(&path).unwrap(), d);

        let bytes = d.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DatasetFile::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(DatasetFile::from_bytes(&bad).is_err());
        assert!(DatasetFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn streaming_writer_matches() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.osds");
        let mut w = DatasetWriter::create(&path, d.layout(), &d.classes, 12).unwrap();
        for t in &d.records {
            w.push(t).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), d.to_bytes().unwrap());
    }

    #[test]
    fn one_shot_split() {
        let classes = make_classes(1, 16).unwrap();
        let (tr, te) = split_one_shot(&classes, 3, 12).unwrap();
        assert_eq!((tr.len(), te.len()), (12, 4));
        assert!(tr.iter().all(|a| te.iter().all(|b| a.class_id != b.class_id)));
        assert_eq!(split_one_shot(&classes, 3, 12).unwrap(), (tr, te));
        assert!(split_one_shot(&classes, 3, 16).is_err());
    }
}
