use super::{Cell, EnvState, FETCH_TARGET};

/// One character per cell, one line per row.
///
/// `#` wall, `~` lava, `G` goal, `L`/`D`/`_` locked/closed/open door,
/// `K` key, `T` fetch target, `o` other ball, `.` floor, agent as `>v<^`.
pub fn render_ascii(state: &EnvState) -> String {
    let mut out = String::with_capacity((state.width() + 1) * state.height());
    for y in 0..state.height() as i32 {
        for x in 0..state.width() as i32 {
            let ch = if (x, y) == state.agent {
                ['>', 'v', '<', '^'][state.heading as usize]
            } else {
                match state.cell(x, y) {
                    Cell::Empty => '.',
                    Cell::Wall => '#',
                    Cell::Lava => '~',
                    Cell::Goal => 'G',
                    Cell::Door { locked: true, .. } => 'L',
                    Cell::Door { open: false, .. } => 'D',
                    Cell::Door { .. } => '_',
                    Cell::Key { .. } => 'K',
                    c if c == FETCH_TARGET => 'T',
                    Cell::Ball { .. } => 'o',
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
