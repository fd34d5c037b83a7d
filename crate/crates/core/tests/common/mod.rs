// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures: a small SEC corpus, rewrite targets and a local
//! chat-completion stub.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use rtlopt::rtl::{parse, RtlDesign};

pub const ADDER: &str =
    "module add4(input [7:0] a, input [7:0] b, input [7:0] c, input [7:0] d, output [7:0] y);
  assign y = ((a + b) + c) + d;
endmodule
";

pub const ADDER_BALANCED: &str =
    "module add4(input [7:0] a, input [7:0] b, input [7:0] c, input [7:0] d, output [7:0] y);
  assign y = (a + b) + (c + d);
endmodule
";

pub fn d(src: &str) -> RtlDesign {
    parse(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// (name, golden, candidate, equivalent)
pub fn sec_corpus() -> Vec<(&'static str, &'static str, &'static str, bool)> {
    vec![
        (
            "commutative add",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a + b; endmodule",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = b + a; endmodule",
            true,
        ),
        (
            "commutative and/xor",
            "module m(input [2:0] a, input [2:0] b, input [2:0] c, output [2:0] y); assign y = (a & b) ^ c; endmodule",
            "module m(input [2:0] a, input [2:0] b, input [2:0] c, output [2:0] y); assign y = c ^ (b & a); endmodule",
            true,
        ),
        (
            "rebalanced add chain",
            "module m(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] d, output [1:0] y); assign y = ((a + b) + c) + d; endmodule",
            "module m(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] d, output [1:0] y); assign y = (a + b) + (c + d); endmodule",
            true,
        ),
        (
            "rebalanced xor chain",
            "module m(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] d, input [1:0] e, output [1:0] y); assign y = (((a ^ b) ^ c) ^ d) ^ e; endmodule",
            "module m(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] d, input [1:0] e, output [1:0] y); assign y = ((a ^ b) ^ c) ^ (d ^ e); endmodule",
            true,
        ),
        (
            "extracted common subexpression",
            "module m(input [2:0] a, input [2:0] b, input [2:0] c, output [2:0] y, output [2:0] z); assign y = (a ^ b) + c; assign z = (a ^ b) & c; endmodule",
            "module m(input [2:0] a, input [2:0] b, input [2:0] c, output [2:0] y, output [2:0] z); wire [2:0] t; assign t = a ^ b; assign y = t + c; assign z = t & c; endmodule",
            true,
        ),
        (
            "restructured mux chain",
            "module m(input [2:0] s, input a, input b, input c, input e, output y); assign y = s[0] ? a : (s[1] ? b : (s[2] ? c : e)); endmodule",
            "module m(input [2:0] s, input a, input b, input c, input e, output y); assign y = (s[0] | s[1]) ? (s[0] ? a : b) : (s[2] ? c : e); endmodule",
            true,
        ),
        (
            "duplicated register",
            "module m(input [1:0] a, input [1:0] b, output [1:0] y, output [1:0] z); reg [1:0] q; assign y = q ^ a; assign z = q; always_ff begin q <= a + b; end endmodule",
            "module m(input [1:0] a, input [1:0] b, output [1:0] y, output [1:0] z); reg [1:0] q; reg [1:0] q2; assign y = q2 ^ a; assign z = q; always_ff begin q <= a + b; q2 <= a + b; end endmodule",
            true,
        ),
        (
            "folded constant",
            "module m(input [2:0] a, input [2:0] b, output [2:0] y); assign y = (a & 3'd0) | b; endmodule",
            "module m(input [2:0] a, input [2:0] b, output [2:0] y); assign y = b; endmodule",
            true,
        ),
        (
            "commuted register input",
            "module m(input [1:0] a, input [1:0] b, output [1:0] y); reg [1:0] q; assign y = q; always_ff begin q <= a + b; end endmodule",
            "module m(input [1:0] a, input [1:0] b, output [1:0] y); reg [1:0] q; assign y = q; always_ff begin q <= b + a; end endmodule",
            true,
        ),
        (
            "de morgan",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = ~(a & b); endmodule",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = ~a | ~b; endmodule",
            true,
        ),
        (
            "add swapped for sub",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a + b; endmodule",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a - b; endmodule",
            false,
        ),
        (
            "and swapped for or",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a & b; endmodule",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a | b; endmodule",
            false,
        ),
        (
            "mux arms swapped",
            "module m(input s, input [2:0] a, input [2:0] b, output [2:0] y); assign y = s ? a : b; endmodule",
            "module m(input s, input [2:0] a, input [2:0] b, output [2:0] y); assign y = s ? b : a; endmodule",
            false,
        ),
        (
            "truncated sum",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = a + b; endmodule",
            "module m(input [3:0] a, input [3:0] b, output [3:0] y); assign y = (a + b) & 4'd7; endmodule",
            false,
        ),
        (
            "truncated compare",
            "module m(input [3:0] a, input [3:0] b, output y); assign y = a < b; endmodule",
            "module m(input [3:0] a, input [3:0] b, output y); assign y = a[2:0] < b[2:0]; endmodule",
            false,
        ),
        (
            "shifted out msb",
            "module m(input [3:0] a, output [3:0] y); assign y = a; endmodule",
            "module m(input [3:0] a, output [3:0] y); assign y = (a << 1) >> 1; endmodule",
            false,
        ),
        (
            "added pipeline stage",
            "module m(input [1:0] a, output [1:0] y); assign y = a; endmodule",
            "module m(input [1:0] a, output [1:0] y); reg [1:0] q; assign y = q; always_ff begin q <= a; end endmodule",
            false,
        ),
        (
            "removed pipeline stage",
            "module m(input [1:0] a, output [1:0] y); reg [1:0] q; reg [1:0] r; assign y = r; always_ff begin q <= a; r <= q; end endmodule",
            "module m(input [1:0] a, output [1:0] y); reg [1:0] q; assign y = q; always_ff begin q <= a; end endmodule",
            false,
        ),
        (
            "inverted reset state",
            "module m(input [1:0] a, output [1:0] y); reg [1:0] q; assign y = q; always_ff begin q <= a; end endmodule",
            "module m(input [1:0] a, output [1:0] y); reg [1:0] q; assign y = ~q; always_ff begin q <= ~a; end endmodule",
            false,
        ),
        (
            "counter starts one ahead",
            "module m(input en, output [3:0] y); reg [3:0] q; assign y = q; always_ff begin q <= en ? q + 4'd1 : q; end endmodule",
            "module m(input en, output [3:0] y); reg [3:0] q; assign y = q + 4'd1; always_ff begin q <= en ? q + 4'd1 : q; end endmodule",
            false,
        ),
    ]
}

/// Designs with at least one site for every rewrite strategy, all small
/// enough for exhaustive SEC.
pub fn rewrite_corpus() -> Vec<&'static str> {
    vec![
        "module r1(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] d, input [1:0] e, output [1:0] y);
  assign y = (((a + b) + c) + d) + e;
endmodule",
        "module r2(input [2:0] a, input [2:0] b, input [2:0] c, output [2:0] y, output [2:0] z);
  assign y = (a ^ b) + c;
  assign z = (a ^ b) & c;
endmodule",
        "module r3(input [1:0] a, input [1:0] b, input [1:0] c, input [1:0] s, output [1:0] y);
  assign y = ((a ^ b) == 2'd3) ? c : (s[0] ? a : (s[1] ? b : 2'd0));
endmodule",
        "module r4(input [3:0] s, input a, input b, input c, input e, output y);
  assign y = s[0] ? a : (s[1] ? b : (s[2] ? c : (s[3] ? e : 1'b0)));
endmodule",
        "module r5(input [1:0] a, input [1:0] b, output [1:0] y, output [1:0] z, output [1:0] w);
  wire [1:0] t;
  assign t = a + b;
  assign y = t ^ a;
  assign z = t & b;
  assign w = t | a;
endmodule",
        "module r6(input [1:0] a, input [1:0] b, output [1:0] y, output [1:0] z);
  reg [1:0] q;
  assign y = q ^ a;
  assign z = q + b;
  always_ff begin
    q <= a + b;
  end
endmodule",
        "module r7(input [2:0] a, input [2:0] b, output [2:0] y);
  assign y = ((a & 3'd0) | b) + (3'd2 + 3'd1);
endmodule",
        "module r8(input a, input b, input c, input d, output y);
  reg q;
  assign y = q ^ ((a + b) - (c & d));
  always_ff begin
    q <= (a ^ c) + (b | d);
  end
endmodule",
        "module r9(input en, input [2:0] k, output [2:0] y);
  reg [2:0] q;
  assign y = q;
  always_ff begin
    q <= (en & (k == 3'd5)) ? q + 3'd1 : ((k < 3'd2) ? 3'd0 : q);
  end
endmodule",
    ]
}

/// A local chat-completion endpoint answering every request with
/// `reply(n, body)` as the assistant message. Connections are closed after
/// each response.
pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

pub fn stub(reply: impl Fn(usize, &str) -> String + Send + Sync + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { continue };
            let mut reader = BufReader::new(s.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let content = reply(n, &String::from_utf8_lossy(&body));
            let payload = serde_json::json!({
                "id": format!("stub-{n}"),
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
            })
            .to_string();
            let _ = write!(
                s,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                payload.len(),
                payload
            );
        }
    });
    Stub {
        url: format!("http://{addr}/v1"),
        hits,
    }
}
