# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

import json

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


def _default_repr_cost(obj):
    return repr(obj)


def _add_kind(row):
    return ' [{}]'.format(row['kind']) if 'kind' in row else ''


class ReprDictCost(dict):
    """Subclass of the built-in dict to display using the Jupyterlab JSON repr.

    Maps a layer name to its cost row {kind, params, macs}. Entries that are
    dictionaries are returned as ReprDictCost objects.
    """

    def __init__(self, *args, rootname="root", expanded=False, **kwargs):
        """Dictionary constructor

        Parameters
        ----------
        rootname : str
            The value to display at the root of the tree
        expanded : bool
            Whether the view of the tree should start expanded
        """

        self._rootname = rootname
        self._expanded = expanded
        super().__init__(*args, **kwargs)

    def _filter_by_kind(self, kind: str) -> "ReprDictCost":
        """Returns a new dictionary with the rows of one layer kind"""

        newdict = {k: v for k, v in self.items() if v.get('kind') == kind}
        return ReprDictCost(newdict, expanded=self._expanded,
                            rootname=self._rootname)

    @property
    def conv(self):
        """Displays only convolution layers"""

        return self._filter_by_kind('conv')

    @property
    def linear(self):
        """Displays only linear layers"""

        return self._filter_by_kind('linear')

    @property
    def attention(self):
        """Displays only attention products"""

        return self._filter_by_kind('attention')

    @property
    def params(self) -> int:
        """Parameter count of the displayed rows"""

        return sum(v.get('params', 0) for v in self.values())

    @property
    def macs(self) -> int:
        """MAC count of the displayed rows"""

        return sum(v.get('macs', 0) for v in self.values())

    def _repr_json_(self):
        if 'kind' not in self:
            show_dict = dict()
            for i in self:
                show_dict[i + _add_kind(self[i])] = self[i]
        else:
            show_dict = self.copy()
        return json.loads(json.dumps(show_dict, default=_default_repr_cost)), \
            {'expanded': self._expanded, 'root': self._rootname}

    def __getitem__(self, key):
        obj = super().__getitem__(key)
        if type(obj) is dict:
            return ReprDictCost(obj, expanded=self._expanded,
                                rootname=key + _add_kind(obj))
        return obj
