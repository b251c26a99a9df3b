//! Small argument grammars: marginal lists, marginal specs, K ranges, pairs.

use twcm::{Family, Marginal};

use crate::error::{CliError, CliResult};

/// `von_mises,von_mises,weibull`.
pub fn families(s: &str) -> CliResult<[Family; 3]> {
    let list = s
        .split(',')
        .map(|f| f.trim().parse::<Family>().map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    list.try_into()
        .map_err(|v: Vec<Family>| CliError::input(format!("expected 3 marginals, got {}", v.len())))
}

/// `family[:p1,p2]` or `family[:name=value,...]`, e.g. `wrapped_cauchy:mu=1,xi=0.5`.
pub fn marginal(s: &str) -> CliResult<Marginal> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let family: Family = name.trim().parse()?;
    let parts: Vec<&str> = rest.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let named = parts.iter().any(|p| p.contains('='));
    let values = if named {
        let template = Marginal::from_params(family, &default_params(family))?;
        let mut values = default_params(family);
        let names: Vec<&str> = template.params().iter().map(|(n, _)| *n).collect();
        let mut seen = vec![false; names.len()];
        for p in &parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("mixed positional and named parameters in `{s}`")))?;
            let i = names
                .iter()
                .position(|n| *n == k.trim())
                .ok_or_else(|| CliError::input(format!("{family} has no parameter `{k}`")))?;
            values[i] = number(v)?;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CliError::input(format!("{family} needs parameter `{}`", names[i])));
        }
        values
    } else {
        parts.iter().map(|p| number(p)).collect::<CliResult<Vec<_>>>()?
    };
    Ok(Marginal::from_params(family, &values)?)
}

fn default_params(family: Family) -> Vec<f64> {
    match family {
        Family::Uniform => vec![],
        Family::WrappedCauchy => vec![0.0, 0.5],
        Family::VonMises => vec![0.0, 1.0],
        Family::Cardioid => vec![0.0, 0.25],
        Family::Weibull => vec![1.0, 1.0],
    }
}

pub fn number(s: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::input(format!("`{s}` is not a number")))
}

/// `a,b,c` as three numbers.
pub fn triple(s: &str) -> CliResult<[f64; 3]> {
    let v = s.split(',').map(number).collect::<CliResult<Vec<_>>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| CliError::input(format!("expected 3 numbers, got {}", v.len())))
}

/// `2..5` (inclusive) or `1,2,4`.
pub fn k_range(s: &str) -> CliResult<Vec<usize>> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| CliError::input(format!("bad K `{t}` in `{s}`")))
    };
    let ks = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        (parse(a)?..=parse(b)?).collect()
    } else {
        s.split(',').map(parse).collect::<CliResult<Vec<_>>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::input(format!("K range `{s}` must be nonempty and positive")));
    }
    Ok(ks)
}

/// 1-based `i,j` → 0-based distinct pair.
pub fn pair(s: &str) -> CliResult<(usize, usize)> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::input(format!("bad pair `{s}`"))))
        .collect::<CliResult<_>>()?;
    match v[..] {
        [i, j] if (1..=3).contains(&i) && (1..=3).contains(&j) && i != j => Ok((i - 1, j - 1)),
        _ => Err(CliError::input(format!("pair must be two distinct indices in 1..3, got `{s}`"))),
    }
}

/// 1-based `k=value`.
pub fn given(s: &str) -> CliResult<(usize, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::input(format!("expected k=VALUE, got `{s}`")))?;
    let k: usize = k
        .trim()
        .parse()
        .ok()
        .filter(|k| (1..=3).contains(k))
        .ok_or_else(|| CliError::input(format!("conditioning index must be 1..3, got `{k}`")))?;
    Ok((k - 1, number(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_specs() {
        assert_eq!(marginal("uniform").unwrap(), Marginal::uniform());
        assert_eq!(
            marginal("wrapped_cauchy:1,0.5").unwrap(),
            Marginal::wrapped_cauchy(1.0, 0.5).unwrap()
        );
        assert_eq!(
            marginal("von_mises:kappa=2,mu=1").unwrap(),
            Marginal::von_mises(1.0, 2.0).unwrap()
        );
        assert!(marginal("von_mises:kappa=2").is_err());
        assert!(marginal("weibull:1").is_err());
        assert!(marginal("gamma:1,2").is_err());
    }

    #[test]
    fn ranges_and_pairs() {
        assert_eq!(k_range("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(k_range("1,3").unwrap(), vec![1, 3]);
        assert_eq!(k_range("2").unwrap(), vec![2]);
        assert!(k_range("0..2").is_err());
        assert_eq!(pair("1,3").unwrap(), (0, 2));
        assert!(pair("2,2").is_err());
        assert_eq!(given("3=0.5").unwrap(), (2, 0.5));
        assert!(given("4=0.5").is_err());
        assert_eq!(families("uniform,von_mises,weibull").unwrap()[2], Family::Weibull);
        assert!(families("uniform,von_mises").is_err());
    }
}
