//! Templated Solidity corpus with docstrings that describe each function.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::frontend::{extract_functions, write_corpus, FunctionUnit};

const FAMILIES: [&str; 8] = ["transfer", "mint", "burn", "withdraw", "deposit", "guard", "distribute", "lock"];
const ASSETS: [&str; 10] =
    ["token", "reward", "share", "stake", "bonus", "credit", "point", "voucher", "coupon", "ticket"];
const ROLES: [&str; 6] = ["owner", "admin", "minter", "operator", "treasury", "investor"];

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// State declarations, docstring and function text for one combination.
fn render(family: &str, asset: &str, role: &str, limit: u32) -> (String, String, String) {
    let (a, r, ca, cr) = (asset, role, capitalize(asset), capitalize(role));
    match family {
        "transfer" => (
            format!("address {r}; mapping(address => uint) {a}Balances;"),
            format!("transfer {a} from the {r} to another account"),
            format!(
                "function transfer{ca}From{cr}(address to, uint amount) public {{
        require(msg.sender == {r});
        require({a}Balances[{r}] >= amount);
        {a}Balances[{r}] -= amount;
        {a}Balances[to] += amount;
        emit {ca}Transferred({r}, to, amount);
    }}"
            ),
        ),
        "mint" => (
            format!("address {r}; uint {a}Supply; mapping(address => uint) {a}Balances;"),
            format!("mint new {a} units for the {r}"),
            format!(
                "function mint{ca}For{cr}(uint amount) public {{
        require(msg.sender == {r});
        require({a}Supply + amount <= {limit});
        {a}Supply += amount;
        {a}Balances[{r}] += amount;
    }}"
            ),
        ),
        "burn" => (
            format!("address {r}; uint {a}Supply; mapping(address => uint) {a}Balances;"),
            format!("burn {a} units held by the {r}"),
            format!(
                "function burn{ca}Of{cr}(uint amount) public returns (bool) {{
        require({a}Balances[{r}] >= amount);
        {a}Balances[{r}] -= amount;
        {a}Supply -= amount;
        return true;
    }}"
            ),
        ),
        "withdraw" => (
            format!("address {r}; mapping(address => uint) {a}Deposits;"),
            format!("withdraw the {a} deposit and send ether to the {r}"),
            format!(
                "function withdraw{ca}To{cr}() public {{
        uint amount = {a}Deposits[{r}];
        {a}Deposits[{r}] = 0;
        payable({r}).transfer(amount);
    }}"
            ),
        ),
        "deposit" => (
            format!("address {r}; mapping(address => uint) {a}Deposits;"),
            format!("deposit {a} funds paid on behalf of the {r}"),
            format!(
                "function deposit{ca}For{cr}() public payable {{
        require(msg.value > 0);
        {a}Deposits[{r}] += msg.value;
    }}"
            ),
        ),
        "guard" => (
            format!("address {r}; mapping(address => bool) {a}Allowed; mapping(address => uint) {a}Limits;"),
            format!("check whether the {r} may spend {a}"),
            format!(
                "function can{cr}Spend{ca}(uint amount) public view returns (bool) {{
        require({a}Allowed[{r}]);
        return {a}Limits[{r}] >= amount;
    }}"
            ),
        ),
        "distribute" => (
            format!("address[] {r}List; mapping(address => uint) {a}Balances;"),
            format!("distribute {a} to every {r} in the list"),
            format!(
                "function distribute{ca}To{cr}s(uint amount) public {{
        for (uint i = 0; i < {r}List.length; i++) {{
            {a}Balances[{r}List[i]] += amount;
        }}
    }}"
            ),
        ),
        _ => (
            format!("address {r}; mapping(address => bool) {a}Locked;"),
            format!("lock the {a} account of the {r}"),
            format!(
                "function lock{ca}Of{cr}() public {{
        if ({a}Locked[{r}]) {{
            revert();
        }} else {{
            {a}Locked[{r}] = true;
        }}
    }}"
            ),
        ),
    }
}

/// Generates `count` function units, one contract each, from distinct
/// (family, asset, role) combinations chosen by `seed`.
pub fn generate_synthetic_units(count: usize, seed: u64) -> Result<Vec<FunctionUnit>, HarnessError> {
    let capacity = FAMILIES.len() * ASSETS.len() * ROLES.len();
    if count < 2 || count > capacity {
        return Err(HarnessError::SynthSize { requested: count, capacity });
    }
    let mut combos: Vec<(usize, usize, usize)> = (0..FAMILIES.len())
        .flat_map(|f| (0..ASSETS.len()).flat_map(move |a| (0..ROLES.len()).map(move |r| (f, a, r))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    combos.shuffle(&mut rng);
    let mut units = Vec::with_capacity(count);
    for (i, &(f, a, r)) in combos[..count].iter().enumerate() {
        let limit = rng.gen_range(1_000..1_000_000u32);
        let (state, doc, body) = render(FAMILIES[f], ASSETS[a], ROLES[r], limit);
        let source = format!(
            "contract {}{}{} {{\n    {state}\n    /// {doc}\n    {body}\n}}\n",
            capitalize(ASSETS[a]),
            capitalize(ROLES[r]),
            capitalize(FAMILIES[f])
        );
        let path = format!("synth/{i:04}.sol");
        let extracted = extract_functions(&source, &path)?;
        match <[FunctionUnit; 1]>::try_from(extracted) {
            Ok([unit]) => units.push(unit),
            Err(other) => {
                return Err(HarnessError::Synth(format!("{path}: expected one function, got {}", other.len())))
            }
        }
    }
    Ok(units)
}

/// The synthetic corpus as JSON Lines.
pub fn generate_synthetic_corpus(count: usize, seed: u64) -> Result<String, HarnessError> {
    Ok(write_corpus(&generate_synthetic_units(count, seed)?))
}
