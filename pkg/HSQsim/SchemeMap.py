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
# Map quantizer scheme tags (the byte carried in a wire frame) to the
# names used in configuration files and on the command line.
#

from . import Errors

HSQ_UNBIASED = 1
HSQ_GREEDY = 2
QSGD = 3
TERNGRAD = 4
SIGNSGD = 5
IDENTITY = 6

schememap = {
    HSQ_UNBIASED: 'hsq-unbiased',
    HSQ_GREEDY: 'hsq-greedy',
    QSGD: 'qsgd',
    TERNGRAD: 'terngrad',
    SIGNSGD: 'signsgd',
    IDENTITY: 'identity',
    }

# Other spellings accepted from users
aliases = {
    'hsq': HSQ_GREEDY,
    'sgd': IDENTITY,
    'none': IDENTITY,
    'unbiased': HSQ_UNBIASED,
    'greedy': HSQ_GREEDY,
    }

def isHSQ(c):
    return c in (HSQ_UNBIASED, HSQ_GREEDY)

def schemeToStr(c):
    if c in schememap:
        return schememap[c]
    raise Errors.UnknownScheme("Int(%d)" % c)

def strToScheme(s):
    s = str(s).strip().lower()
    for (c, name) in schememap.items():
        if (s == name):
            return c
        pass
    if s in aliases:
        return aliases[s]
    raise Errors.UnknownScheme(s)
