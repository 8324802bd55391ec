use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::model::{format_time, Provenance, Timetable};
use super::GtfsError;
use crate::clock::format_date;

/// `<root>/real_gtfs/<YYYY-MM-DD>`
pub fn real_gtfs_dir(root: impl AsRef<Path>, date: NaiveDate) -> PathBuf {
    root.as_ref().join("real_gtfs").join(format_date(date))
}

fn gtfs_date(d: NaiveDate) -> String {
    d.format("%Y%m%d").to_string()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GtfsError + '_ {
    move |source| GtfsError::Io { path: path.to_path_buf(), source }
}

fn write_table(dir: &Path, file: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), GtfsError> {
    let path = dir.join(file);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|source| GtfsError::Csv { path: path.clone(), source })?;
    let wrap = |source| GtfsError::Csv { path: path.clone(), source };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(|source| GtfsError::Csv { path: path.clone(), source })?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

/// Writes the modeled GTFS subset. Output is a pure function of `tt`.
pub fn write_gtfs(tt: &Timetable, dir: impl AsRef<Path>) -> Result<(), GtfsError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    write_table(
        dir,
        "stops.txt",
        &["stop_id", "stop_name", "stop_lat", "stop_lon", "vehicle_type"],
        tt.stops.iter().map(|s| {
            vec![s.id.clone(), s.name.clone(), s.pos.lat.to_string(), s.pos.lon.to_string(), s.kind.as_str().to_string()]
        }),
    )?;
    write_table(
        dir,
        "routes.txt",
        &["route_id", "route_short_name", "route_type"],
        tt.routes.iter().map(|r| vec![r.id.clone(), r.short_name.clone(), r.kind.route_type().to_string()]),
    )?;
    write_table(
        dir,
        "trips.txt",
        &["route_id", "service_id", "trip_id", "block_id"],
        tt.trips.iter().map(|t| {
            vec![t.route_id.clone(), t.service_id.clone(), t.id.clone(), t.block_id.clone().unwrap_or_default()]
        }),
    )?;
    write_table(
        dir,
        "stop_times.txt",
        &["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"],
        tt.trips.iter().flat_map(|t| {
            t.stop_times.iter().map(move |st| {
                vec![
                    t.id.clone(),
                    format_time(st.time.arrival),
                    format_time(st.time.departure),
                    st.stop_id.clone(),
                    st.time.sequence.to_string(),
                ]
            })
        }),
    )?;

    let calendar = dir.join("calendar.txt");
    if tt.services.is_empty() {
        if calendar.exists() {
            fs::remove_file(&calendar).map_err(io_err(&calendar))?;
        }
    } else {
        write_table(
            dir,
            "calendar.txt",
            &["service_id", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "start_date", "end_date"],
            tt.services.iter().map(|(id, c)| {
                let mut row = vec![id.clone()];
                row.extend(c.weekdays.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
                row.push(gtfs_date(c.start));
                row.push(gtfs_date(c.end));
                row
            }),
        )?;
    }

    let feed_info = dir.join("feed_info.txt");
    match tt.provenance {
        Provenance::Real(date) => write_table(
            dir,
            "feed_info.txt",
            &["feed_publisher_name", "feed_publisher_url", "feed_lang", "feed_start_date", "feed_end_date", "feed_version"],
            std::iter::once(vec![
                "modefusion".to_string(),
                "http://localhost".to_string(),
                "en".to_string(),
                gtfs_date(date),
                gtfs_date(date),
                "real".to_string(),
            ]),
        )?,
        Provenance::Planned => {
            if feed_info.exists() {
                fs::remove_file(&feed_info).map_err(io_err(&feed_info))?;
            }
        }
    }
    Ok(())
}

/// Writes a real timetable under `<root>/real_gtfs/<date>` and returns the directory.
pub fn write_real_gtfs(tt: &Timetable, root: impl AsRef<Path>) -> Result<PathBuf, GtfsError> {
    let date = tt.service_date().ok_or(GtfsError::NotSingleDay)?;
    let dir = real_gtfs_dir(root, date);
    write_gtfs(tt, &dir)?;
    Ok(dir)
}
