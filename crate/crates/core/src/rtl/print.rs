// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use super::{Direction, Expr, ExprKind, RtlDesign, ShiftOp};

fn range(width: u32) -> String {
    if width == 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

/// Canonical pretty-printer: one statement per line, two-space indent,
/// every compound operand parenthesized.
pub fn print(d: &RtlDesign) -> String {
    let mut s = String::new();
    let ports: Vec<String> = d
        .ports
        .iter()
        .map(|p| {
            let dir = match p.direction {
                Direction::Input => "input",
                Direction::Output => "output",
            };
            format!("{dir} {}{}", range(p.width), p.name)
        })
        .collect();
    let _ = writeln!(s, "module {}({});", d.name, ports.join(", "));
    for n in &d.nets {
        let _ = writeln!(s, "  wire {}{};", range(n.width), n.name);
    }
    for r in &d.registers {
        let _ = writeln!(s, "  reg {}{};", range(r.width), r.name);
    }
    for a in &d.assigns {
        let _ = writeln!(s, "  assign {} = {};", a.target, print_expr(&a.expr));
    }
    if !d.registers.is_empty() {
        s.push_str("  always_ff begin\n");
        for r in &d.registers {
            let _ = writeln!(s, "    {} <= {};", r.name, print_expr(&r.next));
        }
        s.push_str("  end\n");
    }
    s.push_str("endmodule\n");
    s
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn atomic(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Const(_) | ExprKind::Var(_) | ExprKind::Not(_) | ExprKind::Slice(..)
    )
}

fn write_operand(s: &mut String, e: &Expr) {
    if atomic(e) {
        write_expr(s, e);
    } else {
        s.push('(');
        write_expr(s, e);
        s.push(')');
    }
}

fn write_expr(s: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Const(v) => {
            let _ = write!(s, "{}'d{}", e.width, v);
        }
        ExprKind::Var(n) => s.push_str(n),
        ExprKind::Not(a) => {
            s.push('~');
            write_operand(s, a);
        }
        ExprKind::Binary(op, a, b) => {
            write_operand(s, a);
            let _ = write!(s, " {} ", op.symbol());
            write_operand(s, b);
        }
        ExprKind::Shift(op, a, k) => {
            write_operand(s, a);
            let sym = match op {
                ShiftOp::Shl => "<<",
                ShiftOp::Shr => ">>",
            };
            let _ = write!(s, " {sym} {k}");
        }
        ExprKind::Slice(a, hi, lo) => {
            if matches!(a.kind, ExprKind::Var(_)) {
                write_expr(s, a);
            } else {
                s.push('(');
                write_expr(s, a);
                s.push(')');
            }
            if hi == lo {
                let _ = write!(s, "[{hi}]");
            } else {
                let _ = write!(s, "[{hi}:{lo}]");
            }
        }
        ExprKind::Mux(c, a, b) => {
            write_operand(s, c);
            s.push_str(" ? ");
            write_operand(s, a);
            s.push_str(" : ");
            write_operand(s, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::rtl::parse;

    #[test]
    fn canonical_layout() {
        let d = parse(
            "module m(input [7:0] a,input [7:0] b, input s, output [7:0] y);
             reg [7:0] q; wire [7:0] t;
             assign t = s ? a+b : ~a;
             assign y = q;
             always_ff begin q <= t; end endmodule",
        )
        .unwrap();
        let text = super::print(&d);
        assert_eq!(
            text,
            "module m(input [7:0] a, input [7:0] b, input s, output [7:0] y);
  wire [7:0] t;
  reg [7:0] q;
  assign t = s ? (a + b) : ~a;
  assign y = q;
  always_ff begin
    q <= t;
  end
endmodule
"
        );
        let again = parse(&text).unwrap();
        assert!(again.same_structure(&d));
        assert_eq!(super::print(&again), text);
    }

    #[test]
    fn nested_slices_and_not_round_trip() {
        let src =
            "module m(input [7:0] a, output [1:0] y);\n  assign y = (~(a >> 1))[3:2];\nendmodule\n";
        let d = parse(src).unwrap();
        assert_eq!(super::print(&d), src);
    }
}
