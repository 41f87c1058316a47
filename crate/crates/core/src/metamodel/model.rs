use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use super::{AttrType, ChangeEvent, ChangeKind, MetaClass, Metamodel, ModelError, ModelTag, Origin, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelElement {
    pub id: String,
    pub class: String,
    pub attrs: BTreeMap<String, Value>,
    /// Reference name to linked element ids. Links are kept as ordered sets.
    pub refs: BTreeMap<String, BTreeSet<String>>,
}

impl ModelElement {
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }

    pub fn links(&self, reference: &str) -> impl Iterator<Item = &str> {
        self.refs.get(reference).into_iter().flat_map(|s| s.iter().map(String::as_str))
    }
}

/// A set of typed elements conforming to one metamodel.
///
/// Single writer: mutate through `&mut Model`, hand out clones as snapshots.
#[derive(Debug, Clone)]
pub struct Model {
    tag: ModelTag,
    metamodel: Arc<Metamodel>,
    elements: BTreeMap<String, ModelElement>,
    root: Option<String>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.tag == other.tag
            && self.root == other.root
            && self.elements == other.elements
            && (Arc::ptr_eq(&self.metamodel, &other.metamodel) || self.metamodel == other.metamodel)
    }
}

/// Serializes as `{"model", "root", "elements"}` with elements ordered by id.
impl Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Model", 3)?;
        s.serialize_field("model", &self.tag)?;
        s.serialize_field("root", &self.root)?;
        s.serialize_field("elements", &self.elements.values().collect::<Vec<_>>())?;
        s.end()
    }
}

impl Model {
    pub fn new(tag: ModelTag, metamodel: Arc<Metamodel>) -> Self {
        Self { tag, metamodel, elements: BTreeMap::new(), root: None }
    }

    pub fn tag(&self) -> ModelTag {
        self.tag
    }

    pub fn metamodel(&self) -> &Arc<Metamodel> {
        &self.metamodel
    }

    pub fn root(&self) -> Option<&ModelElement> {
        self.root.as_ref().and_then(|id| self.elements.get(id))
    }

    pub fn root_id(&self) -> Option<&str> {
        self.root.as_deref()
    }

    /// Marks an existing element as the model root.
    pub fn set_root(&mut self, id: &str) -> Result<(), ModelError> {
        if !self.elements.contains_key(id) {
            return Err(ModelError::UnknownElement(id.to_owned()));
        }
        self.root = Some(id.to_owned());
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ModelElement> {
        self.elements.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.elements.contains_key(id)
    }

    /// Elements in id order.
    pub fn elements(&self) -> impl Iterator<Item = &ModelElement> {
        self.elements.values()
    }

    pub fn elements_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a ModelElement> + 'a {
        self.elements.values().filter(move |e| e.class == class)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    fn class(&self, name: &str) -> Result<&MetaClass, ModelError> {
        self.metamodel.class(name).ok_or_else(|| ModelError::UnknownClass(name.to_owned()))
    }

    fn event(&self, element_id: &str, kind: ChangeKind, origin: Origin) -> ChangeEvent {
        ChangeEvent { model: self.tag, element_id: element_id.to_owned(), kind, origin }
    }

    fn build_attrs(
        class: &MetaClass,
        initial: impl IntoIterator<Item = (String, Value)>,
    ) -> Result<BTreeMap<String, Value>, ModelError> {
        let mut attrs: BTreeMap<String, Value> =
            class.attributes.iter().map(|a| (a.name.clone(), a.ty.default_value())).collect();
        for (name, value) in initial {
            let def = class.attribute(&name).ok_or_else(|| ModelError::UnknownAttribute {
                class: class.name.clone(),
                attr: name.clone(),
            })?;
            check_type(class, &def.name, &def.ty, &value)?;
            attrs.insert(name, value);
        }
        Ok(attrs)
    }

    /// Creates an element. Attributes not given take their type default.
    pub fn instantiate(
        &mut self,
        class: &str,
        id: &str,
        initial: impl IntoIterator<Item = (String, Value)>,
        origin: Origin,
    ) -> Result<ChangeEvent, ModelError> {
        let meta = self.class(class)?;
        if self.elements.contains_key(id) {
            return Err(ModelError::DuplicateId(id.to_owned()));
        }
        let attrs = Self::build_attrs(meta, initial)?;
        let element = ModelElement {
            id: id.to_owned(),
            class: class.to_owned(),
            attrs: attrs.clone(),
            refs: BTreeMap::new(),
        };
        self.elements.insert(id.to_owned(), element);
        Ok(self.event(id, ChangeKind::Created { class: class.to_owned(), attrs }, origin))
    }

    /// Sets an attribute. Returns `None` when the value is unchanged.
    ///
    /// Read-only attributes may only be written with [`Origin::External`].
    pub fn set_attribute(
        &mut self,
        id: &str,
        attr: &str,
        value: Value,
        origin: Origin,
    ) -> Result<Option<ChangeEvent>, ModelError> {
        let element = self.elements.get(id).ok_or_else(|| ModelError::UnknownElement(id.to_owned()))?;
        let metamodel = Arc::clone(&self.metamodel);
        let meta = metamodel.class(&element.class).ok_or_else(|| ModelError::UnknownClass(element.class.clone()))?;
        let def = meta.attribute(attr).ok_or_else(|| ModelError::UnknownAttribute {
            class: meta.name.clone(),
            attr: attr.to_owned(),
        })?;
        check_type(meta, attr, &def.ty, &value)?;
        if !def.writable && origin != Origin::External {
            return Err(ModelError::ReadOnlyAttribute { class: meta.name.clone(), attr: attr.to_owned() });
        }
        let element = self.elements.get_mut(id).expect("checked above");
        let old = element.attrs.insert(attr.to_owned(), value.clone()).unwrap_or_else(|| def.ty.default_value());
        if old == value {
            return Ok(None);
        }
        Ok(Some(self.event(id, ChangeKind::AttrChanged { attr: attr.to_owned(), old, new: value }, origin)))
    }

    /// Deletes an element and removes every link that points at it.
    pub fn delete(&mut self, id: &str, origin: Origin) -> Result<ChangeEvent, ModelError> {
        if self.root.as_deref() == Some(id) {
            return Err(ModelError::CannotDeleteRoot(id.to_owned()));
        }
        let element = self.elements.remove(id).ok_or_else(|| ModelError::UnknownElement(id.to_owned()))?;
        for other in self.elements.values_mut() {
            for targets in other.refs.values_mut() {
                targets.remove(id);
            }
            other.refs.retain(|_, targets| !targets.is_empty());
        }
        Ok(self.event(id, ChangeKind::Deleted { class: element.class }, origin))
    }

    /// Adds a link. Returns `None` if the link already exists.
    pub fn add_link(
        &mut self,
        id: &str,
        reference: &str,
        target: &str,
        origin: Origin,
    ) -> Result<Option<ChangeEvent>, ModelError> {
        let element = self.elements.get(id).ok_or_else(|| ModelError::UnknownElement(id.to_owned()))?;
        let meta = self.class(&element.class)?;
        let def = meta.reference_def(reference).ok_or_else(|| ModelError::UnknownReference {
            class: meta.name.clone(),
            reference: reference.to_owned(),
        })?;
        let target_el =
            self.elements.get(target).ok_or_else(|| ModelError::UnknownElement(target.to_owned()))?;
        if target_el.class != def.target {
            return Err(ModelError::WrongTargetClass {
                class: meta.name.clone(),
                reference: reference.to_owned(),
                target: target.to_owned(),
                expected: def.target.clone(),
                found: target_el.class.clone(),
            });
        }
        let current = element.refs.get(reference);
        if current.is_some_and(|s| s.contains(target)) {
            return Ok(None);
        }
        if let Some(max) = def.multiplicity.upper() {
            if current.map_or(0, BTreeSet::len) >= max {
                return Err(ModelError::MultiplicityExceeded {
                    class: meta.name.clone(),
                    reference: reference.to_owned(),
                    max,
                });
            }
        }
        let element = self.elements.get_mut(id).expect("checked above");
        element.refs.entry(reference.to_owned()).or_default().insert(target.to_owned());
        Ok(Some(self.event(
            id,
            ChangeKind::LinkAdded { reference: reference.to_owned(), target: target.to_owned() },
            origin,
        )))
    }

    pub fn remove_link(
        &mut self,
        id: &str,
        reference: &str,
        target: &str,
        origin: Origin,
    ) -> Result<Option<ChangeEvent>, ModelError> {
        let element = self.elements.get_mut(id).ok_or_else(|| ModelError::UnknownElement(id.to_owned()))?;
        let removed = element.refs.get_mut(reference).is_some_and(|s| s.remove(target));
        element.refs.retain(|_, targets| !targets.is_empty());
        Ok(removed.then(|| {
            self.event(
                id,
                ChangeKind::LinkRemoved { reference: reference.to_owned(), target: target.to_owned() },
                origin,
            )
        }))
    }

    /// Replays an event. Read-only checks are skipped; stale events are rejected.
    pub fn apply(&mut self, event: &ChangeEvent) -> Result<(), ModelError> {
        let id = event.element_id.as_str();
        match &event.kind {
            ChangeKind::Created { class, attrs } => {
                self.instantiate(class, id, attrs.clone(), Origin::External)?;
            }
            ChangeKind::Deleted { class } => {
                match self.elements.get(id) {
                    Some(e) if &e.class == class => {}
                    _ => return Err(ModelError::InvalidEvent(format!("no `{class}` element `{id}` to delete"))),
                }
                self.delete(id, event.origin)?;
            }
            ChangeKind::AttrChanged { attr, old, new } => {
                let current = self.elements.get(id).and_then(|e| e.attrs.get(attr));
                if current != Some(old) {
                    return Err(ModelError::InvalidEvent(format!("{id}.{attr} is not {old}")));
                }
                self.set_attribute(id, attr, new.clone(), Origin::External)?;
            }
            ChangeKind::LinkAdded { reference, target } => {
                if self.add_link(id, reference, target, event.origin)?.is_none() {
                    return Err(ModelError::InvalidEvent(format!("{id}.{reference} already links {target}")));
                }
            }
            ChangeKind::LinkRemoved { reference, target } => {
                if self.remove_link(id, reference, target, event.origin)?.is_none() {
                    return Err(ModelError::InvalidEvent(format!("{id}.{reference} does not link {target}")));
                }
            }
        }
        Ok(())
    }

    /// Reports unmet lower bounds (`1` references with no link).
    pub fn check_integrity(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for element in self.elements.values() {
            let Some(meta) = self.metamodel.class(&element.class) else {
                problems.push(format!("`{}` has unknown class `{}`", element.id, element.class));
                continue;
            };
            for def in &meta.references {
                let n = element.refs.get(&def.name).map_or(0, BTreeSet::len);
                if n < def.multiplicity.lower() {
                    problems.push(format!("`{}`.{} requires {} link(s)", element.id, def.name, def.multiplicity));
                }
            }
        }
        problems
    }
}

fn check_type(class: &MetaClass, attr: &str, ty: &AttrType, value: &Value) -> Result<(), ModelError> {
    if ty.accepts(value) {
        Ok(())
    } else {
        Err(ModelError::TypeMismatch {
            class: class.name.clone(),
            attr: attr.to_owned(),
            expected: ty.to_string(),
            found: match value {
                Value::Str(s) => format!("String '{s}'"),
                other => format!("{} {other}", other.kind()),
            },
        })
    }
}

/// Minimal event list that turns `a` into `b`.
///
/// Deletions and creations come first (element id ascending); attribute
/// changes and link changes follow (element id, then name ascending). An
/// element whose class differs is deleted and recreated.
pub fn diff(a: &Model, b: &Model, origin: Origin) -> Result<Vec<ChangeEvent>, ModelError> {
    if !(Arc::ptr_eq(&a.metamodel, &b.metamodel) || a.metamodel == b.metamodel) {
        return Err(ModelError::MetamodelMismatch);
    }
    let mut events = Vec::new();
    let mut work = a.clone();

    let ids: BTreeSet<&String> = a.elements.keys().chain(b.elements.keys()).collect();
    for id in &ids {
        match (a.elements.get(*id), b.elements.get(*id)) {
            (Some(_), None) => events.push(work.delete(id, origin)?),
            (None, Some(new)) => {
                events.push(work.instantiate(&new.class, id, new.attrs.clone(), origin)?);
            }
            (Some(old), Some(new)) if old.class != new.class => {
                events.push(work.delete(id, origin)?);
                events.push(work.instantiate(&new.class, id, new.attrs.clone(), origin)?);
            }
            _ => {}
        }
    }

    for (id, target) in &b.elements {
        let current = work.elements.get(id).expect("phase one created every element of b").clone();
        for (attr, value) in &target.attrs {
            if current.attrs.get(attr) != Some(value) {
                let old = current.attrs.get(attr).cloned().unwrap_or(Value::Bool(false));
                let event = ChangeEvent {
                    model: work.tag,
                    element_id: id.clone(),
                    kind: ChangeKind::AttrChanged { attr: attr.clone(), old, new: value.clone() },
                    origin,
                };
                work.apply(&event)?;
                events.push(event);
            }
        }
        let references: BTreeSet<&String> = current.refs.keys().chain(target.refs.keys()).collect();
        let empty = BTreeSet::new();
        for reference in references {
            let have = current.refs.get(reference).unwrap_or(&empty);
            let want = target.refs.get(reference).unwrap_or(&empty);
            for gone in have.difference(want) {
                events.extend(work.remove_link(id, reference, gone, origin)?);
            }
            for added in want.difference(have) {
                events.extend(work.add_link(id, reference, added, origin)?);
            }
        }
    }
    if a.root != b.root {
        work.root = b.root.clone();
    }
    Ok(events)
}
