pub mod bank_file;
pub mod formats;
pub mod manifest;
pub mod report;
