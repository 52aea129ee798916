use opcorr::artifacts::{
    checkpoint_name, latest_checkpoint, read_checkpoint, read_csv, read_stats, write_checkpoint, write_csv,
    write_stats, TraceRow,
};
use opcorr::format::{decode_grid, encode_grid, read_grid, read_json, sidecar_path, write_grid_with_sidecar};
use opcorr::raster::{png_name, to_gray, write_png};
use opcorr::Error;
use opcorr_core::aem::ErrorStats;
use opcorr_core::correction::{CorrectionNet, NetArch};
use opcorr_core::operators::PatConfig;
use opcorr_core::Grid;
use proptest::prelude::*;
use std::path::Path;

proptest! {
    #[test]
    fn grid_bytes_round_trip(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let g = Grid::from_fn(rows, cols, |r, c| {
            let v = (seed.wrapping_mul(31).wrapping_add((r * cols + c) as u64)) as f64;
            v.sin() * 1e3
        });
        let bytes = encode_grid(&g);
        prop_assert_eq!(bytes.len(), 16 + 8 * rows * cols);
        prop_assert_eq!(decode_grid(&bytes, Path::new("mem")).unwrap(), g);
    }
}

#[test]
fn header_layout() {
    let g = Grid::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
    let b = encode_grid(&g);
    assert_eq!(&b[..4], b"OPC1");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
    assert_eq!(&b[12..16], &[0, 0, 0, 0]);
    assert_eq!(f64::from_le_bytes(b[56..64].try_into().unwrap()), 6.5);
}

#[test]
fn corrupt_grids_are_rejected() {
    let g = Grid::zeros(2, 2);
    let mut b = encode_grid(&g);
    assert!(decode_grid(&b[..10], Path::new("x")).is_err());
    b.pop();
    assert!(matches!(decode_grid(&b, Path::new("x")), Err(Error::Format { .. })));
    let mut b = encode_grid(&g);
    b[0] = b'X';
    assert!(decode_grid(&b, Path::new("x")).is_err());
}

#[test]
fn grid_file_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a/b/img.x.bin");
    let g = Grid::from_fn(4, 4, |r, c| (r + 2 * c) as f64);
    let cfg = PatConfig::with_size(16);
    write_grid_with_sidecar(&path, &g, &cfg).unwrap();
    assert_eq!(read_grid(&path).unwrap(), g);
    let back: PatConfig = read_json(&sidecar_path(&path)).unwrap();
    assert_eq!(back, cfg);
    let err = read_grid(&dir.path().join("missing.bin")).unwrap_err();
    assert!(err.to_string().contains("missing.bin"));
}

fn arch() -> NetArch {
    NetArch {
        channels: vec![2, 4],
        kernel: 3,
        convs_per_block: 1,
        ..NetArch::desk()
    }
}

#[test]
fn checkpoint_round_trip_at_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let f = CorrectionNet::random(arch(), 1, 0.3).unwrap();
    let g = CorrectionNet::random(arch(), 2, 0.3).unwrap();
    let p = write_checkpoint(dir.path(), "forward_adjoint", "balls", 3, &f, Some(&g)).unwrap();
    assert_eq!(p.file_name().unwrap().to_str().unwrap(), checkpoint_name("forward_adjoint", "balls", 3));
    let ck = read_checkpoint(&p).unwrap();
    assert_eq!(ck.header.epoch, 3);
    assert_eq!(ck.f.arch(), f.arch());
    for (a, b) in ck.f.params().iter().zip(f.params()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    let gb = ck.g.unwrap();
    assert_eq!(gb.n_params(), g.n_params());

    write_checkpoint(dir.path(), "forward_adjoint", "balls", 12, &f, Some(&g)).unwrap();
    let latest = latest_checkpoint(dir.path(), "forward_adjoint", "balls").unwrap();
    assert!(latest.ends_with("forward_adjoint_balls_12.ckpt"));
    let missing = latest_checkpoint(dir.path(), "forward", "balls").unwrap_err();
    assert!(missing.to_string().contains("forward_balls_<epoch>.ckpt"), "{missing}");
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = CorrectionNet::new(arch(), 1).unwrap();
    let p = write_checkpoint(dir.path(), "forward", "balls", 1, &f, None).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::Format { .. })));
}

#[test]
fn error_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let eta = Grid::from_vec(2, 1, vec![0.5, -1.0]).unwrap();
    let stats = ErrorStats::new(eta, vec![2.0, 0.5, 0.5, 1.0], None, 0.25).unwrap();
    let p = dir.path().join("aem_balls.stats");
    write_stats(&p, "balls", &stats, 0.25).unwrap();
    let back = read_stats(&p).unwrap();
    assert_eq!(back.eta, stats.eta);
    assert_eq!(back.gamma, stats.gamma);
    for (a, b) in back.l.iter().zip(&stats.l) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(read_stats(&dir.path().join("none.stats")).unwrap_err().to_string().contains("opcorr train"));
}

#[test]
fn trace_csv_round_trip_with_optional_columns() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        TraceRow {
            iter: 0,
            data_term: 1.5,
            alignment: Some(0.25),
            rel_l2: None,
            fwd_err: 0.1,
            adj_err: 0.2,
            lemma_lhs: Some(1.0),
            lemma_rhs: Some(0.5),
        },
        TraceRow {
            iter: 10,
            data_term: 1.0,
            alignment: None,
            rel_l2: Some(0.75),
            fwd_err: 0.0,
            adj_err: 0.0,
            lemma_lhs: None,
            lemma_rhs: None,
        },
    ];
    let p = dir.path().join("t.csv");
    write_csv(&p, &rows).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("iter,data_term,alignment,rel_l2,fwd_err,adj_err"));
    assert_eq!(read_csv::<TraceRow>(&p).unwrap(), rows);
}

#[test]
fn png_normalisation_and_name() {
    let g = Grid::from_vec(1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
    let (px, lo, hi) = to_gray(&g);
    assert_eq!(px, vec![0, 128, 255]);
    assert_eq!((lo, hi), (-1.0, 1.0));
    assert_eq!(to_gray(&Grid::zeros(2, 2)).0, vec![0; 4]);
    assert_eq!(png_name("x", 0.0, 0.5), "x_min0.000e0_max5.000e-1.png");
    let dir = tempfile::tempdir().unwrap();
    let p = write_png(dir.path(), "panel", &g).unwrap();
    let decoder = png::Decoder::new(std::fs::File::open(&p).unwrap());
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (3, 1));
    assert_eq!(info.color_type, png::ColorType::Grayscale);
    assert_eq!(&buf[..3], &[0, 128, 255]);
}
