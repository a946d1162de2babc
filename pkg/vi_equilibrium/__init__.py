'''Variational inequalities, equilibrium prices and fixed points on compact convex sets.

vi_equilibrium solves Hartman-Stampacchia variational inequalities for maps and polytope
valued correspondences, and from them computes market clearing prices on the simplex or on
the unit ball intersected with a polyhedral cone, and Brouwer and Kakutani fixed points.
Every answer comes with a certificate that can be rechecked from the problem alone.
'''
