//! Tokenizes a few Java lines and prepares a small release, showing the
//! integrity report and the prepared-cache text.
//!
//! ```text
//! cargo run --example preprocess
//! ```

use bafline::corpus::{preprocess_line, prepare_dataset, read_dataset};

const CSV: &str = "\
filename,file-label,code_line,line_number,line-label
src/Auth.java,True,\"String user = request.getParameter(\"\"user\"\");\",1,False
src/Auth.java,True,,2,False
src/Auth.java,True,if (retries > 0x1F) { lock(user); },3,True
src/Util.java,False,return a.b(c).d(42L);,1,False
";

fn main() -> bafline::Result<()> {
    for line in ["int total = price * 3 + 1.5e3;", "log.warn(\"retry\", 'x');", "/* ignored */"] {
        println!("{line:<36} -> {:?}", preprocess_line(line));
    }

    let dataset = read_dataset(CSV.as_bytes())?;
    let (corpus, report) = prepare_dataset(&dataset, 75);
    println!("\nblank lines dropped: {}", report.blank_lines_dropped);
    println!("truncated lines:     {}", report.truncated_lines);
    println!("\n{}", corpus.to_text(&["source=inline".into()]));
    Ok(())
}
