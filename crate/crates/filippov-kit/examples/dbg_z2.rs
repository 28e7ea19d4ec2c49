use filippov_kit::scenarios;
fn main() {
    let sc = scenarios::builtin("z2").unwrap();
    let [a, b] = sc.psvf.window;
    for pe in sc.psvf.pseudo_equilibria(a, b).unwrap() {
        println!("{:?}", pe);
    }
}
