#
#    hsqsim - Hyper-sphere gradient quantization and federated SGD simulator
#    Copyright (C) 2026  The hsqsim developers
#
#    This program is free software; you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation; either version 2 of the License, or
#    (at your option) any later version.
#
#    This program is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with this program; if not, write to the Free Software
#    Foundation, Inc., 51 Franklin Street, Fifth Floor,
#      Boston, MA  02110-1301  USA

#
# Exceptions raised by the quantizers, codecs and the simulator.  All of
# them derive from HSQErr so the command line can report them uniformly.
#

class HSQErr(Exception):
    kind = "error"

    def __init__(self, str):
        self.s = str
        return

    def __str__(self):
        return self.s

    def toDict(self):
        return { "error": self.kind, "message": self.s }

    pass

class RankDeficient(HSQErr):
    kind = "RankDeficient"

    def __init__(self, str, sigma_min=None):
        HSQErr.__init__(self, str)
        self.sigma_min = sigma_min
        return

    pass

class InvalidShape(HSQErr):
    kind = "InvalidShape"
    pass

class InvalidGradient(HSQErr):
    kind = "InvalidGradient"
    pass

class OutOfRange(HSQErr):
    kind = "OutOfRange"

    def __init__(self, value, low, high):
        HSQErr.__init__(self, "value %r outside [%r, %r]" % (value, low, high))
        self.value = value
        self.low = low
        self.high = high
        return

    pass

class DimensionMismatch(HSQErr):
    kind = "DimensionMismatch"
    pass

class EmptyInput(HSQErr):
    kind = "EmptyInput"
    pass

class Overflow(HSQErr):
    kind = "Overflow"
    pass

class UnknownScheme(HSQErr):
    kind = "UnknownScheme"

    def __init__(self, scheme):
        HSQErr.__init__(self, "unknown scheme: %s" % (scheme,))
        self.scheme = scheme
        return

    pass

# A malformed frame or codebook file
class FrameErr(HSQErr):
    kind = "FrameErr"
    pass

class ConfigErr(HSQErr):
    kind = "ConfigErr"

    def __init__(self, fields):
        # fields is a list of (field name, problem) pairs
        self.fields = list(fields)
        HSQErr.__init__(self, "; ".join("%s: %s" % (f, p)
                                        for (f, p) in self.fields))
        return

    def toDict(self):
        d = HSQErr.toDict(self)
        d["fields"] = [ { "field": f, "problem": p } for (f, p) in self.fields ]
        return d

    pass
