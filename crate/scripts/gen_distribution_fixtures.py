"""Reference values for the normal and Student-t functions (mpmath, 50 digits)."""
import json
import mpmath as mp

mp.mp.dps = 50


def t_cdf(x, df):
    x = mp.mpf(x)
    df = mp.mpf(df)
    tail = mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + x * x), regularized=True) / 2
    return 1 - tail if x > 0 else tail


def t_quantile(p, df):
    return mp.findroot(lambda x: t_cdf(x, df) - mp.mpf(p), mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))


probs = ["1e-12", "1e-8", "0.0001", "0.001", "0.01", "0.025", "0.05", "0.1", "0.2", "0.3",
         "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "0.95", "0.975", "0.99", "0.999", "0.9999"]
xs = ["-8", "-5", "-3.5", "-2", "-1.959963984540054", "-1", "-0.25", "0", "0.5", "1",
      "1.644853626951472", "2", "3", "4.5", "6"]
dfs = [1, 2, 3, 4, 5, 10, 30, 64, 100, 250, 1000]
t_xs = ["-10", "-3", "-1.5", "-0.3", "0", "0.2", "1", "2.1", "4", "25"]
t_ps = ["0.001", "0.025", "0.1", "0.5", "0.8", "0.95", "0.975", "0.999"]

out = {
    "normal_quantile": [[p, mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1), 20)] for p in probs],
    "normal_cdf": [[x, mp.nstr(mp.ncdf(mp.mpf(x)), 20)] for x in xs],
    "t_cdf": [[x, df, mp.nstr(t_cdf(x, df), 20)] for df in dfs for x in t_xs],
    "t_quantile": [[p, df, mp.nstr(t_quantile(p, df), 20)] for df in dfs for p in t_ps],
}
print(json.dumps(out, indent=1))
