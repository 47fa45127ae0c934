"""
Pydantic model to xml mapping used by configuration documents.
"""

import abc
import enum
import logging
from inspect import isclass
from typing import Any, ClassVar, Dict, Optional, Tuple, Type, Union

import numpy as np
import pydantic as pd
import pydantic.fields

from . import config, errors
from .model import parse_config

if config.FORCE_STD_XML:
    import xml.etree.ElementTree as etree
else:
    try:
        from lxml import etree  # type: ignore[no-redef]
    except ImportError:
        import xml.etree.ElementTree as etree  # noqa: F401

logger = logging.getLogger(__name__)

MISSING = object()


class XmlEncoder:
    """
    Xml data encoder.
    """

    def encode(self, obj: Any) -> str:
        """
        Encodes provided object into a string.

        :param obj: object to be encoded
        :return: encoded object
        """

        # str and int mixin enums are encoded by value
        if isinstance(obj, enum.Enum):
            return self.encode(obj.value)
        if isinstance(obj, str):
            return obj
        if isinstance(obj, bool):
            return 'true' if obj else 'false'
        if isinstance(obj, int):
            return str(obj)
        if isinstance(obj, float):
            return repr(obj)  # shortest round-tripping form
        if isinstance(obj, np.generic):
            return self.encode(obj.item())

        return self.default(obj)

    def default(self, obj: Any) -> str:
        raise TypeError(f'Object of type {obj.__class__.__name__} is not XML serializable')


DEFAULT_ENCODER = XmlEncoder()


class XmlEntityInfo(pd.fields.FieldInfo):
    """
    Xml placement of a document field.
    """


class XmlAttributeInfo(XmlEntityInfo):
    """
    Document field stored as an attribute of its section element.

    :param name: attribute name
    :param kwargs: pydantic field arguments
    """

    def __init__(self, name: Optional[str] = None, **kwargs: Any):
        super().__init__(**kwargs)
        self._name = name

    @property
    def name(self) -> Optional[str]:
        return self._name


class XmlElementInfo(XmlEntityInfo):
    """
    Document field stored as repeated or single child elements.

    :param tag: element tag
    :param kwargs: pydantic field arguments
    """

    def __init__(self, tag: Optional[str] = None, **kwargs: Any):
        super().__init__(**kwargs)
        self._tag = tag

    @property
    def tag(self) -> Optional[str]:
        return self._tag


def attr(default: Any = None, **kwargs: Any) -> XmlAttributeInfo:
    """
    Declares a section field stored as an attribute.
    """

    return XmlAttributeInfo(default=default, **kwargs)


def element(default: Any = None, **kwargs: Any) -> XmlElementInfo:
    """
    Declares a section field stored as child elements.
    """

    return XmlElementInfo(default=default, **kwargs)


class Location(enum.IntEnum):
    """
    Field data location.
    """

    MISSING = 0  # sub-element for models
    ELEMENT = 1
    ATTRIBUTE = 2


_HOMOGENEOUS_SHAPES = frozenset((
    pd.fields.SHAPE_LIST,
    pd.fields.SHAPE_TUPLE_ELLIPSIS,
    pd.fields.SHAPE_SEQUENCE,
))


class Serializer(abc.ABC):
    """
    Reads and writes one document field.
    """

    @abc.abstractmethod
    def serialize(self, element: etree.Element, value: Any, *, encoder: XmlEncoder) -> None:
        """
        Writes a field value into its section element.

        :param element: section element
        :param value: field value, `None` writes nothing
        :param encoder: value encoder
        """

    @abc.abstractmethod
    def deserialize(self, element: etree.Element) -> Any:
        """
        Reads a field value from its section element.

        :param element: element deserialized value should be fetched from
        :return: deserialized value or `MISSING`
        """

    @classmethod
    def build_field_serializer(cls, model_field: pd.fields.ModelField) -> 'Serializer':
        field_type = model_field.type_
        field_info = model_field.field_info
        is_model_field = isclass(field_type) and issubclass(field_type, BaseXmlModel)

        if isinstance(field_info, XmlElementInfo):
            location, name = Location.ELEMENT, field_info.tag or model_field.name
        elif isinstance(field_info, XmlAttributeInfo):
            location, name = Location.ATTRIBUTE, field_info.name or model_field.name
        else:
            location, name = Location.MISSING, model_field.name

        if model_field.shape in _HOMOGENEOUS_SHAPES:
            if location is Location.ATTRIBUTE:
                raise errors.CodecError(f"collection field {model_field.name} can't be an attribute")
            if is_model_field:
                raise errors.CodecError(f"sub-model collection {model_field.name} is not supported")
            return HomogeneousSerializerFactory.build(name)
        elif model_field.shape != pd.fields.SHAPE_SINGLETON:
            raise errors.CodecError(f"fields of type {model_field.outer_type_} are not supported")
        elif is_model_field:
            if location is Location.ATTRIBUTE:
                raise errors.CodecError(f"sub-model field {model_field.name} can't be an attribute")
            return ModelSerializerFactory.ElementSerializer(field_type, field_type.__xml_tag__ or name)
        else:
            return PrimitiveSerializerFactory.build(location, name)


class PrimitiveSerializerFactory:
    """
    Scalar field serializers: attributes and single elements.
    """

    class AttributeSerializer(Serializer):
        def __init__(self, name: str):
            self.attr_name = name

        def serialize(self, element: etree.Element, value: Any, *, encoder: XmlEncoder) -> None:
            if value is not None:
                element.set(self.attr_name, encoder.encode(value))

        def deserialize(self, element: etree.Element) -> Any:
            return element.get(self.attr_name, MISSING)

    class ElementSerializer(Serializer):
        def __init__(self, name: str):
            self.element_name = name

        def serialize(self, element: etree.Element, value: Any, *, encoder: XmlEncoder) -> None:
            if value is not None:
                sub_element = etree.SubElement(element, self.element_name)
                sub_element.text = encoder.encode(value)

        def deserialize(self, element: etree.Element) -> Any:
            if (sub_element := element.find(self.element_name)) is None:
                return MISSING

            return sub_element.text

    @classmethod
    def build(cls, location: Location, name: str) -> Serializer:
        if location is Location.ELEMENT:
            return cls.ElementSerializer(name)
        elif location is Location.ATTRIBUTE:
            return cls.AttributeSerializer(name)
        else:
            raise errors.CodecError(f"primitive field {name} must be declared with attr() or element()")


class ModelSerializerFactory:
    """
    Section serializers: the document root and nested sections.
    """

    class RootSerializer(Serializer):
        def __init__(self, model: Type['BaseXmlModel']):
            self.element_name = model.__xml_tag__ or model.__name__
            self.field_serializers = {
                field_name: self.build_field_serializer(model_field)
                for field_name, model_field in model.__fields__.items()
            }

        def serialize(self, element: Optional[etree.Element], value: Any, *, encoder: XmlEncoder) -> etree.Element:
            if element is None:
                element = etree.Element(self.element_name)

            for field_name, field_serializer in self.field_serializers.items():
                field_serializer.serialize(element, getattr(value, field_name), encoder=encoder)

            return element

        def deserialize(self, element: etree.Element) -> Dict[str, Any]:
            return {
                field_name: value
                for field_name, field_serializer in self.field_serializers.items()
                if (value := field_serializer.deserialize(element)) is not MISSING
            }

    class ElementSerializer(Serializer):
        def __init__(self, model: Type['BaseXmlModel'], name: str):
            self.model = model
            self.element_name = name

        def serialize(self, element: etree.Element, value: Any, *, encoder: XmlEncoder) -> None:
            assert self.model.__xml_serializer__ is not None, "model is partially initialized"

            if value is not None:
                sub_element = etree.SubElement(element, self.element_name)
                self.model.__xml_serializer__.serialize(sub_element, value, encoder=encoder)

        def deserialize(self, element: etree.Element) -> Any:
            assert self.model.__xml_serializer__ is not None, "model is partially initialized"

            if (sub_element := element.find(self.element_name)) is None:
                return MISSING

            return self.model.__xml_serializer__.deserialize(sub_element)


class HomogeneousSerializerFactory:
    """
    Repeated primitive element collection serializer factory.
    """

    class ElementSerializer(Serializer):
        def __init__(self, name: str):
            self.element_name = name

        def serialize(self, element: etree.Element, value: Any, *, encoder: XmlEncoder) -> None:
            for item in value or ():
                sub_element = etree.SubElement(element, self.element_name)
                sub_element.text = encoder.encode(item)

        def deserialize(self, element: etree.Element) -> Any:
            sub_elements = element.findall(self.element_name)
            if not sub_elements:
                return MISSING

            return [sub_element.text for sub_element in sub_elements]

    @classmethod
    def build(cls, name: str) -> Serializer:
        return cls.ElementSerializer(name)


class XmlModelMeta(pd.main.ModelMetaclass):

    __is_base_model_defined__ = False

    def __new__(mcls, name: str, bases: Tuple[type], namespace: Dict[str, Any], **kwargs: Any) -> Any:
        cls = super().__new__(mcls, name, bases, namespace, **kwargs)
        if mcls.__is_base_model_defined__:
            cls.__init_serializer__()
        else:
            mcls.__is_base_model_defined__ = True

        return cls


class BaseXmlModel(pd.BaseModel, metaclass=XmlModelMeta):
    """
    Base xml-mapped model.
    """

    __xml_tag__: ClassVar[Optional[str]] = None
    __xml_serializer__: ClassVar[Optional[ModelSerializerFactory.RootSerializer]] = None

    def __init_subclass__(cls, *args: Any, tag: Optional[str] = None, **kwargs: Any):
        """
        Initializes a subclass.

        :param tag: element tag
        """

        super().__init_subclass__(*args, **kwargs)
        cls.__xml_tag__ = tag

    @classmethod
    def __init_serializer__(cls) -> None:
        cls.__xml_serializer__ = ModelSerializerFactory.RootSerializer(cls)

    @classmethod
    def from_xml_tree(cls, root: etree.Element) -> Any:
        """
        Deserializes an xml element tree to an object of `cls` type.

        :param root: xml element to deserialize the object from
        :return: deserialized object
        """

        assert cls.__xml_serializer__ is not None, "model is partially initialized"

        expected_tag = cls.__xml_serializer__.element_name
        if root.tag != expected_tag:
            raise errors.CodecError(f"unexpected root element <{root.tag}>, expected <{expected_tag}>")

        return parse_config(cls, cls.__xml_serializer__.deserialize(root))

    @classmethod
    def from_xml(cls, source: Union[str, bytes]) -> Any:
        """
        Deserializes an xml string to an object of `cls` type.

        :param source: xml string
        :return: deserialized object
        """

        try:
            root = etree.fromstring(source)
        except SyntaxError as e:  # ElementTree.ParseError and lxml XMLSyntaxError both derive from it
            raise errors.CodecError(f"malformed document: {e}") from e

        return cls.from_xml_tree(root)

    def to_xml_tree(self, *, encoder: Optional[XmlEncoder] = None) -> etree.Element:
        """
        Serializes the object to an xml tree.

        :param encoder: xml type encoder
        :return: object xml representation
        """

        assert self.__xml_serializer__ is not None
        return self.__xml_serializer__.serialize(None, self, encoder=encoder or DEFAULT_ENCODER)

    def to_xml(self, *, encoder: Optional[XmlEncoder] = None, pretty: bool = False, **kwargs: Any) -> bytes:
        """
        Serializes the object to an xml string.

        :param encoder: xml type encoder
        :param pretty: indent nested elements
        :param kwargs: additional xml serialization arguments
        :return: object xml representation
        """

        root = self.to_xml_tree(encoder=encoder)
        if pretty:
            if hasattr(etree, 'indent'):
                etree.indent(root)
            else:
                kwargs.setdefault('pretty_print', True)

        return etree.tostring(root, **kwargs)
