"""High-precision log Phi references frozen in test_normal.cpp."""
import mpmath as mp

mp.mp.dps = 40
for z in (-40, -38, -10, 1, 6):
    print(z, mp.nstr(mp.log(mp.ncdf(z)), 20))
print("Phi(1)", mp.nstr(mp.ncdf(1), 20))
